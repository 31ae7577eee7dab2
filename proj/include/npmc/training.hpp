#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "npmc/adam.hpp"
#include "npmc/data_io.hpp"
#include "npmc/growth.hpp"
#include "npmc/memory_index.hpp"
#include "npmc/model.hpp"
#include "npmc/rng.hpp"

namespace npmc {

struct SplitSpec {
    double train_fraction = 0.70;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
    std::uint64_t seed = 42;

    void validate() const;
};

struct Splits {
    EmbeddingDataset train, val, test;
};

// Seeded shuffle, then contiguous slices of floor(train*N) and floor(val*N)
// with the remainder going to test.
Splits split_dataset(const EmbeddingDataset& dataset, const SplitSpec& spec);

struct TrainConfig {
    std::uint64_t epochs = 20;
    std::size_t batch_size = 32;
    std::size_t knn_k = 5;
    AdamConfig adam;
    GrowthConfig growth;
    double tau = 0.5;
    std::size_t d_prime = 128;
    std::uint64_t seed = 42;
    std::optional<std::size_t> memory_capacity = 5000;
    bool exclude_exact = true;   // skip zero-distance hits during training
    bool use_memory = true;      // off: retrieved feature forced to zero
    std::optional<std::uint64_t> early_stop_patience;

    void validate() const;
};

void to_json(nlohmann::ordered_json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct LogRow {
    std::uint64_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    std::size_t n_blocks = 0;
    std::size_t active_blocks = 0;
    std::size_t memory_size = 0;
    int growth_event = 0;

    std::string to_csv_row() const;
    static std::string csv_header();
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> predictions;
};

// Owns the model, optimizer, memory index, RNG, and growth log; runs the
// training protocol and serializes the whole state for exact resume.
class Trainer {
public:
    Trainer(TrainConfig cfg, std::size_t d_embed, std::size_t class_count);

    // Epochs epochs_completed()+1 .. cfg.epochs; returns one log row each.
    std::vector<LogRow> fit(const EmbeddingDataset& train, const EmbeddingDataset& val);

    // Hard gating, BN running stats, read-only memory queries.
    EvalResult evaluate(const EmbeddingDataset& ds) const;

    void save_checkpoint(const std::string& path) const;
    static Trainer load_checkpoint(const std::string& path);

    NeuroClassifier& model() { return model_; }
    const NeuroClassifier& model() const { return model_; }
    const FlatMemoryIndex& memory() const { return memory_; }
    const GrowthLog& growth_log() const { return growth_log_; }
    const LossHistory& val_history() const { return val_history_; }
    const TrainConfig& config() const { return cfg_; }
    std::uint64_t epochs_completed() const { return epoch_done_; }
    void set_epochs(std::uint64_t epochs) { cfg_.epochs = epochs; }

    // One full pass over the training set; exposed for targeted tests.
    std::pair<double, double> train_epoch(const EmbeddingDataset& train, std::uint64_t epoch);

private:
    Trainer() = default;

    Tensor batch_inputs(const EmbeddingDataset& ds, const std::vector<std::size_t>& idx,
                        Tensor& retrieved, bool training) const;

    TrainConfig cfg_;
    std::size_t d_embed_ = 0, class_count_ = 0;
    NeuroClassifier model_;
    AdamOptimizer opt_;
    FlatMemoryIndex memory_{0};
    Rng rng_;
    GrowthLog growth_log_;
    LossHistory val_history_;
    std::uint64_t epoch_done_ = 0;
};

}  // namespace npmc
