#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "npmc/errors.hpp"

namespace npmc {

// Little-endian byte buffer writer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void bytes(const std::string& s) { buf_.append(s); }
    void magic(const char m[4]) { buf_.append(m, 4); }

    const std::string& str() const { return buf_; }

private:
    void raw(const void* p, std::size_t n) {
        // Host is assumed little-endian (x86/ARM64); formats are defined LE.
        buf_.append(reinterpret_cast<const char*>(p), n);
    }
    std::string buf_;
};

// Offset-tracking reader; all failures throw FormatError naming the offset.
class ByteReader {
public:
    explicit ByteReader(std::string data) : data_(std::move(data)) {}

    std::uint8_t u8() { return read<std::uint8_t>(); }
    std::uint16_t u16() { return read<std::uint16_t>(); }
    std::uint32_t u32() { return read<std::uint32_t>(); }
    std::uint64_t u64() { return read<std::uint64_t>(); }
    float f32() { return read<float>(); }
    double f64() { return read<double>(); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    void expect_magic(const char m[4], const char* what) {
        need(4);
        if (std::memcmp(data_.data() + pos_, m, 4) != 0)
            throw FormatError(std::string(what) + ": bad magic at offset " + std::to_string(pos_));
        pos_ += 4;
    }

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == data_.size(); }

    void expect_end(const char* what) {
        if (!at_end())
            throw FormatError(std::string(what) + ": trailing bytes at offset " + std::to_string(pos_));
    }

private:
    template <typename T>
    T read() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    void need(std::size_t n) {
        if (pos_ + n > data_.size())
            throw FormatError("truncated data: need " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", have " + std::to_string(data_.size() - pos_));
    }

    std::string data_;
    std::size_t pos_ = 0;
};

// Whole-file helpers; writes go to a temp file then rename, so a failed
// command never leaves a partial output behind.
std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace npmc
