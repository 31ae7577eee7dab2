#include "npmc/memory_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "npmc/binio.hpp"

namespace npmc {

void FlatMemoryIndex::add(const std::vector<double>& v, int label) {
    if (v.size() != dim_)
        throw ContractError("memory: vector of length " + std::to_string(v.size()) +
                            " into index of dim " + std::to_string(dim_));
    records_.push_back(MemoryRecord{v, label, next_id_++});
    if (capacity_ && records_.size() > *capacity_) records_.pop_front();
}

void FlatMemoryIndex::add_batch(const std::vector<std::vector<double>>& vectors,
                                const std::vector<int>& labels) {
    if (vectors.size() != labels.size())
        throw ContractError("memory: " + std::to_string(vectors.size()) + " vectors vs " +
                            std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < vectors.size(); ++i) add(vectors[i], labels[i]);
}

std::vector<SearchHit> FlatMemoryIndex::search_knn(const std::vector<double>& query, std::size_t k,
                                                   bool exclude_exact) const {
    if (query.size() != dim_)
        throw ContractError("memory: query of length " + std::to_string(query.size()) +
                            " into index of dim " + std::to_string(dim_));
    if (k < 1) throw ContractError("memory: k must be >= 1");

    // (dist2, insertion_id) keeps the tie-break inside the heap ordering.
    using Key = std::pair<double, std::uint64_t>;
    std::vector<std::pair<Key, const MemoryRecord*>> heap;  // max-heap of the best k
    heap.reserve(k + 1);
    auto cmp = [](const auto& a, const auto& b) { return a.first < b.first; };

    double worst = std::numeric_limits<double>::infinity();  // heap front once full
    for (const MemoryRecord& r : records_) {
        double d2 = 0.0;
        const double* a = r.vector.data();
        const double* b = query.data();
        for (std::size_t i = 0; i < dim_; ++i) {
            const double d = a[i] - b[i];
            d2 += d * d;
            if (d2 > worst) break;  // partial sum only grows; this point can't enter
        }
        if (d2 > worst) continue;
        if (exclude_exact && d2 == 0.0) continue;
        Key key{d2, r.insertion_id};
        if (heap.size() < k) {
            heap.emplace_back(key, &r);
            std::push_heap(heap.begin(), heap.end(), cmp);
        } else if (key < heap.front().first) {
            std::pop_heap(heap.begin(), heap.end(), cmp);
            heap.back() = {key, &r};
            std::push_heap(heap.begin(), heap.end(), cmp);
        } else {
            continue;
        }
        if (heap.size() == k) worst = heap.front().first.first;
    }

    std::sort(heap.begin(), heap.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<SearchHit> out;
    out.reserve(heap.size());
    for (const auto& [key, rec] : heap) out.push_back(SearchHit{*rec, key.first});
    return out;
}

std::vector<double> FlatMemoryIndex::aggregate_mean(const std::vector<SearchHit>& neighbors) const {
    std::vector<double> mean(dim_, 0.0);
    if (neighbors.empty()) return mean;  // cold start
    for (const SearchHit& h : neighbors)
        for (std::size_t i = 0; i < dim_; ++i) mean[i] += h.record.vector[i];
    for (double& v : mean) v /= static_cast<double>(neighbors.size());
    return mean;
}

std::string FlatMemoryIndex::serialize() const {
    ByteWriter w;
    w.magic("NPMI");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u64(records_.size());
    w.u8(capacity_ ? 1 : 0);
    w.u64(capacity_ ? static_cast<std::uint64_t>(*capacity_) : 0);
    for (const MemoryRecord& r : records_) {
        w.u64(r.insertion_id);
        w.u16(static_cast<std::uint16_t>(r.label));
        for (double v : r.vector) w.f32(static_cast<float>(v));
    }
    return w.str();
}

FlatMemoryIndex FlatMemoryIndex::deserialize(const std::string& bytes) {
    ByteReader r(bytes);
    r.expect_magic("NPMI", "memory index");
    const std::uint32_t version = r.u32();
    if (version != 1)
        throw FormatError("memory index: unsupported version " + std::to_string(version));
    const std::uint32_t dim = r.u32();
    const std::uint64_t count = r.u64();
    const bool has_cap = r.u8() != 0;
    const std::uint64_t cap = r.u64();

    FlatMemoryIndex idx(dim, has_cap ? std::optional<std::size_t>(cap) : std::nullopt);
    for (std::uint64_t i = 0; i < count; ++i) {
        MemoryRecord rec;
        rec.insertion_id = r.u64();
        rec.label = r.u16();
        rec.vector.resize(dim);
        for (std::uint32_t j = 0; j < dim; ++j) rec.vector[j] = static_cast<double>(r.f32());
        idx.records_.push_back(std::move(rec));
    }
    r.expect_end("memory index");
    idx.next_id_ = idx.records_.empty() ? 0 : idx.records_.back().insertion_id + 1;
    return idx;
}

void FlatMemoryIndex::save(const std::string& path) const { write_file_atomic(path, serialize()); }

FlatMemoryIndex FlatMemoryIndex::load(const std::string& path) {
    return deserialize(read_file(path));
}

bool FlatMemoryIndex::operator==(const FlatMemoryIndex& o) const {
    if (dim_ != o.dim_ || capacity_ != o.capacity_ || records_.size() != o.records_.size())
        return false;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const MemoryRecord& a = records_[i];
        const MemoryRecord& b = o.records_[i];
        if (a.insertion_id != b.insertion_id || a.label != b.label || a.vector != b.vector)
            return false;
    }
    return true;
}

}  // namespace npmc
