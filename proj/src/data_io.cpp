#include "npmc/data_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "npmc/binio.hpp"
#include "npmc/rng.hpp"

namespace npmc {

void EmbeddingDataset::validate() const {
    if (vectors.size() != n * d) throw ContractError("dataset: vector storage size mismatch");
    if (labels.size() != n) throw ContractError("dataset: label count mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] < 0 || labels[i] >= class_count)
            throw ContractError("dataset: label " + std::to_string(labels[i]) + " out of range at row " +
                                std::to_string(i));
    for (double v : vectors)
        if (!std::isfinite(v)) throw ContractError("dataset: non-finite value");
}

void write_binary(const EmbeddingDataset& ds, const std::string& path) {
    ByteWriter w;
    w.magic("NPEB");
    w.u32(1);
    w.u64(ds.n);
    w.u32(static_cast<std::uint32_t>(ds.d));
    w.u16(static_cast<std::uint16_t>(ds.class_count));
    w.u8(1);  // has_labels
    for (double v : ds.vectors) w.f32(static_cast<float>(v));
    for (int l : ds.labels) w.u16(static_cast<std::uint16_t>(l));
    write_file_atomic(path, w.str());
}

EmbeddingDataset read_binary(const std::string& path) {
    ByteReader r(read_file(path));
    r.expect_magic("NPEB", "dataset");
    const std::uint32_t version = r.u32();
    if (version != 1) throw FormatError("dataset: unsupported version " + std::to_string(version));
    EmbeddingDataset ds;
    ds.n = r.u64();
    ds.d = r.u32();
    ds.class_count = r.u16();
    const bool has_labels = r.u8() != 0;
    ds.vectors.resize(ds.n * ds.d);
    for (double& v : ds.vectors) v = static_cast<double>(r.f32());
    ds.labels.assign(ds.n, 0);
    if (has_labels)
        for (int& l : ds.labels) l = r.u16();
    r.expect_end("dataset");
    ds.validate();
    return ds;
}

void write_csv(const EmbeddingDataset& ds, const std::string& path) {
    std::ostringstream out;
    out << "label";
    for (std::size_t j = 0; j < ds.d; ++j) out << ",f" << j;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.n; ++i) {
        out << ds.labels[i];
        for (std::size_t j = 0; j < ds.d; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.vectors[i * ds.d + j]);
            out << ',' << buf;
        }
        out << "\n";
    }
    write_file_atomic(path, out.str());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no, std::size_t col) {
    double v;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw FormatError("csv: non-numeric cell '" + cell + "' at line " + std::to_string(line_no) +
                          ", column " + std::to_string(col));
    return v;
}

}  // namespace

EmbeddingDataset read_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string> header = split_line(line);
    if (header.empty() || header[0] != "label")
        throw FormatError("csv: header must start with 'label' at line 1");
    const std::size_t d = header.size() - 1;

    EmbeddingDataset ds;
    ds.d = d;
    int max_label = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != d + 1)
            throw FormatError("csv: expected " + std::to_string(d + 1) + " cells, got " +
                              std::to_string(cells.size()) + " at line " + std::to_string(line_no));
        const double label = parse_cell(cells[0], line_no, 0);
        ds.labels.push_back(static_cast<int>(label));
        for (std::size_t j = 0; j < d; ++j)
            ds.vectors.push_back(parse_cell(cells[j + 1], line_no, j + 1));
        max_label = std::max(max_label, ds.labels.back());
        ++ds.n;
    }
    ds.class_count = max_label + 1;
    ds.validate();
    return ds;
}

EmbeddingDataset gen_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.dim < 1 || spec.per_class < 1)
        throw ContractError("synthetic: classes, dim, per_class must be >= 1");
    if (!(spec.cluster_radius > 0.0) || !(spec.noise_std > 0.0))
        throw ContractError("synthetic: radius and noise must be > 0");

    Rng rng(spec.seed);

    // Centers on the radius-r sphere, rejection-sampled for separation.
    std::vector<std::vector<double>> centers;
    int rejections = 0;
    while (centers.size() < static_cast<std::size_t>(spec.classes)) {
        std::vector<double> c(spec.dim);
        double norm2 = 0.0;
        for (double& v : c) {
            v = rng.normal();
            norm2 += v * v;
        }
        const double scale = spec.cluster_radius / std::sqrt(norm2);
        for (double& v : c) v *= scale;

        bool ok = true;
        for (const auto& prev : centers) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < spec.dim; ++i) {
                const double diff = c[i] - prev[i];
                d2 += diff * diff;
            }
            if (d2 < spec.cluster_radius * spec.cluster_radius) {
                ok = false;
                break;
            }
        }
        if (ok) {
            centers.push_back(std::move(c));
        } else if (++rejections > 10000) {
            throw ContractError("synthetic: center placement infeasible; raise radius or lower classes");
        }
    }

    EmbeddingDataset ds;
    ds.d = spec.dim;
    ds.class_count = spec.classes;
    ds.n = static_cast<std::size_t>(spec.classes) * spec.per_class;
    ds.vectors.reserve(ds.n * ds.d);
    ds.labels.reserve(ds.n);
    for (int c = 0; c < spec.classes; ++c) {
        for (std::size_t s = 0; s < spec.per_class; ++s) {
            for (std::size_t j = 0; j < spec.dim; ++j) {
                // Quantize to f32 so in-memory data matches any disk round trip.
                const double v = centers[c][j] + spec.noise_std * rng.normal();
                ds.vectors.push_back(static_cast<double>(static_cast<float>(v)));
            }
            ds.labels.push_back(c);
        }
    }
    return ds;
}

int label_from_filename(const std::string& name) {
    return name.find("GT") != std::string::npos ? 1 : 0;
}

}  // namespace npmc
