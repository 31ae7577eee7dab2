#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npmc/autodiff.hpp"
#include "npmc/rng.hpp"

namespace npmc {

enum class GateMode { SoftTrain, HardInfer };

// Affine + batchnorm + ReLU over the concatenated (embedding, retrieved)
// feature; the entry point of the network.
struct FusionLayer {
    Parameter weight;  // d_prime x d_in
    Parameter bias;    // 1 x d_prime
    BatchNormState bn;
};

// Square affine transform guarded by a learnable scalar gate; skippable
// without changing tensor shape.
struct ModularBlock {
    Parameter weight;  // d_prime x d_prime
    Parameter bias;    // 1 x d_prime
    Parameter gate;    // 1 x 1
    std::uint64_t serial = 0;
    std::uint64_t created_at_epoch = 0;

    double gamma() const { return sigmoid(gate.value.data[0]); }
};

struct ForwardResult {
    Tensor logits;
    Tensor probs;
    std::vector<double> gate_values;  // gamma per block
    std::vector<char> fired;          // hard mode: block executed
};

struct ParameterCensus {
    std::size_t total = 0;
    std::vector<std::size_t> per_block;
    std::size_t active_blocks = 0;  // sigma(g) > tau
};

struct BlockInfo {
    std::uint64_t serial = 0;
    std::uint64_t created_at_epoch = 0;
};

// Fusion layer + ordered gated modular blocks + softmax head, with a
// growable block list. Training uses soft residual gating
// h = gamma*M(h) + (1-gamma)*h; inference uses the hard skip rule
// (execute iff sigma(g) > tau).
class NeuroClassifier {
public:
    NeuroClassifier() = default;  // empty shell; filled by from_structure or checkpoint load

    NeuroClassifier(std::size_t d_embed, std::size_t d_prime, std::size_t class_count,
                    std::size_t initial_blocks, double tau, std::size_t max_blocks, Rng& rng);

    // Rebuild with given structure and zeroed parameters (checkpoint load).
    static NeuroClassifier from_structure(std::size_t d_embed, std::size_t d_prime,
                                          std::size_t class_count, double tau,
                                          std::size_t max_blocks,
                                          const std::vector<BlockInfo>& blocks,
                                          std::uint64_t next_block_serial);

    // --- inference path (pure, BN running stats, hard or soft gating) ---
    Tensor fuse(const Tensor& embed_batch, const Tensor& retrieved_batch) const;
    ForwardResult forward(const Tensor& fused_batch, GateMode mode) const;
    std::vector<int> predict(const Tensor& fused_batch) const;  // hard mode, argmax, low-index ties

    // --- training path (tape, BN batch stats, soft gating) ---
    NodeId fuse_on_tape(Tape& tape, const Tensor& embed_batch, const Tensor& retrieved_batch,
                        bool update_running = true);
    NodeId forward_on_tape(Tape& tape, NodeId fused);

    std::vector<std::uint64_t> grow(std::size_t count, std::uint64_t epoch, Rng& rng);

    ParameterCensus parameter_census() const;
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

    std::size_t d_embed() const { return d_embed_; }
    std::size_t d_prime() const { return d_prime_; }
    std::size_t class_count() const { return class_count_; }
    double tau() const { return tau_; }
    std::size_t max_blocks() const { return max_blocks_; }
    std::size_t block_count() const { return blocks_.size(); }
    const std::vector<ModularBlock>& blocks() const { return blocks_; }
    FusionLayer& fusion() { return fusion_; }
    const FusionLayer& fusion() const { return fusion_; }
    std::uint64_t next_block_serial() const { return next_block_serial_; }
    void set_bn_mode(BnMode mode) { fusion_.bn.mode = mode; }

    static std::vector<int> argmax_rows(const Tensor& logits);

private:
    ModularBlock make_block(std::uint64_t epoch, Rng* rng);

    std::size_t d_embed_ = 0, d_prime_ = 0, class_count_ = 0, max_blocks_ = 0;
    double tau_ = 0.5;
    FusionLayer fusion_;
    std::vector<ModularBlock> blocks_;
    Parameter head_weight_;  // C x d_prime
    Parameter head_bias_;    // 1 x C
    std::uint64_t next_block_serial_ = 0;
};

}  // namespace npmc
