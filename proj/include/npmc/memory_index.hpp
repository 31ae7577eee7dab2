#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "npmc/errors.hpp"

namespace npmc {

struct MemoryRecord {
    std::vector<double> vector;
    int label = 0;
    std::uint64_t insertion_id = 0;
};

struct SearchHit {
    MemoryRecord record;
    double dist2 = 0.0;
};

// Exact L2 nearest-neighbor store of embedding-label pairs. Squared L2
// metric, ties broken by lower insertion id. Optional capacity with FIFO
// eviction; unbounded by default.
class FlatMemoryIndex {
public:
    explicit FlatMemoryIndex(std::size_t dim, std::optional<std::size_t> capacity = std::nullopt)
        : dim_(dim), capacity_(capacity) {}

    void add_batch(const std::vector<std::vector<double>>& vectors, const std::vector<int>& labels);
    void add(const std::vector<double>& v, int label);

    // min(k, eligible) hits sorted by (dist2, insertion_id) ascending.
    // exclude_exact skips records at distance exactly zero.
    std::vector<SearchHit> search_knn(const std::vector<double>& query, std::size_t k,
                                      bool exclude_exact = false) const;

    // Elementwise mean of neighbor vectors; zero vector on an empty list.
    std::vector<double> aggregate_mean(const std::vector<SearchHit>& neighbors) const;

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return records_.size(); }
    std::optional<std::size_t> capacity() const { return capacity_; }
    const std::deque<MemoryRecord>& records() const { return records_; }

    std::string serialize() const;
    static FlatMemoryIndex deserialize(const std::string& bytes);
    void save(const std::string& path) const;
    static FlatMemoryIndex load(const std::string& path);

    bool operator==(const FlatMemoryIndex& o) const;

private:
    std::size_t dim_;
    std::deque<MemoryRecord> records_;
    std::optional<std::size_t> capacity_;
    std::uint64_t next_id_ = 0;
};

}  // namespace npmc
