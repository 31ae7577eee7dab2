#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npmc/errors.hpp"

namespace npmc {

// Labeled fixed-dimension feature vectors. Values live as f64 in memory;
// on-disk formats store f32.
struct EmbeddingDataset {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> vectors;  // n * d row-major
    std::vector<int> labels;      // n entries in [0, class_count)
    int class_count = 0;

    const double* row(std::size_t i) const { return &vectors[i * d]; }
    std::vector<double> row_vec(std::size_t i) const {
        return std::vector<double>(row(i), row(i) + d);
    }
    void validate() const;
};

void write_binary(const EmbeddingDataset& ds, const std::string& path);
EmbeddingDataset read_binary(const std::string& path);

void write_csv(const EmbeddingDataset& ds, const std::string& path);
EmbeddingDataset read_csv(const std::string& path);

struct SyntheticSpec {
    int classes = 10;
    std::size_t dim = 64;
    std::size_t per_class = 500;
    double cluster_radius = 5.0;
    double noise_std = 1.0;
    std::uint64_t seed = 42;
};

// Gaussian clusters around centers drawn on the radius-r hypersphere,
// redrawn until pairwise center distance >= r. Deterministic per spec.
EmbeddingDataset gen_synthetic(const SyntheticSpec& spec);

// Defect labeling rule: 1 iff the name contains the case-sensitive
// substring "GT", else 0.
int label_from_filename(const std::string& name);

}  // namespace npmc
