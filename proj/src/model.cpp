#include "npmc/model.hpp"

#include <cmath>

#include "npmc/errors.hpp"

namespace npmc {

namespace {

// sigma^-1(0.1): new blocks start with low influence on the forward pass.
constexpr double kLowInfluenceGate = -2.1972245773362196;

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Tensor t(rows, cols);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows != b.rows) throw DimensionError("concat: row mismatch");
    Tensor out(a.rows, a.cols + b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 0; c < a.cols; ++c) out(r, c) = a(r, c);
        for (std::size_t c = 0; c < b.cols; ++c) out(r, a.cols + c) = b(r, c);
    }
    return out;
}

}  // namespace

ModularBlock NeuroClassifier::make_block(std::uint64_t epoch, Rng* rng) {
    ModularBlock b;
    b.serial = next_block_serial_++;
    b.created_at_epoch = epoch;
    const std::string prefix = "block" + std::to_string(b.serial);
    const double bound = std::sqrt(6.0 / static_cast<double>(d_prime_));
    b.weight = Parameter(prefix + ".W", rng ? uniform_tensor(d_prime_, d_prime_, bound, *rng)
                                            : Tensor(d_prime_, d_prime_));
    b.bias = Parameter(prefix + ".b", Tensor(1, d_prime_));
    b.gate = Parameter(prefix + ".gate", Tensor(1, 1, kLowInfluenceGate));
    return b;
}

NeuroClassifier::NeuroClassifier(std::size_t d_embed, std::size_t d_prime, std::size_t class_count,
                                 std::size_t initial_blocks, double tau, std::size_t max_blocks,
                                 Rng& rng) {
    if (initial_blocks < 1) throw ContractError("model: need at least one block");
    if (!(tau > 0.0 && tau < 1.0)) throw ContractError("model: tau must be in (0, 1)");
    if (max_blocks < initial_blocks) throw ContractError("model: max_blocks below initial blocks");

    d_embed_ = d_embed;
    d_prime_ = d_prime;
    class_count_ = class_count;
    max_blocks_ = max_blocks;
    tau_ = tau;

    const std::size_t d_in = 2 * d_embed;  // embedding + retrieved feature
    const double fusion_bound = std::sqrt(6.0 / static_cast<double>(d_in));
    fusion_.weight = Parameter("fusion.W", uniform_tensor(d_prime, d_in, fusion_bound, rng));
    fusion_.bias = Parameter("fusion.b", Tensor(1, d_prime));
    fusion_.bn = BatchNormState("fusion.bn", d_prime);

    for (std::size_t i = 0; i < initial_blocks; ++i) blocks_.push_back(make_block(0, &rng));

    const double head_bound = std::sqrt(6.0 / static_cast<double>(d_prime));
    head_weight_ = Parameter("head.W", uniform_tensor(class_count, d_prime, head_bound, rng));
    head_bias_ = Parameter("head.b", Tensor(1, class_count));
}

NeuroClassifier NeuroClassifier::from_structure(std::size_t d_embed, std::size_t d_prime,
                                                std::size_t class_count, double tau,
                                                std::size_t max_blocks,
                                                const std::vector<BlockInfo>& blocks,
                                                std::uint64_t next_block_serial) {
    NeuroClassifier m;
    m.d_embed_ = d_embed;
    m.d_prime_ = d_prime;
    m.class_count_ = class_count;
    m.max_blocks_ = max_blocks;
    m.tau_ = tau;
    m.fusion_.weight = Parameter("fusion.W", Tensor(d_prime, 2 * d_embed));
    m.fusion_.bias = Parameter("fusion.b", Tensor(1, d_prime));
    m.fusion_.bn = BatchNormState("fusion.bn", d_prime);
    for (const BlockInfo& info : blocks) {
        m.next_block_serial_ = info.serial;
        ModularBlock b = m.make_block(info.created_at_epoch, nullptr);
        m.blocks_.push_back(std::move(b));
    }
    m.next_block_serial_ = next_block_serial;
    m.head_weight_ = Parameter("head.W", Tensor(class_count, d_prime));
    m.head_bias_ = Parameter("head.b", Tensor(1, class_count));
    return m;
}

Tensor NeuroClassifier::fuse(const Tensor& embed_batch, const Tensor& retrieved_batch) const {
    if (embed_batch.cols != d_embed_ || retrieved_batch.cols != d_embed_)
        throw DimensionError("fuse: expected embedding dim " + std::to_string(d_embed_) + ", got " +
                             embed_batch.shape_str() + " and " + retrieved_batch.shape_str());
    const Tensor concat = concat_cols(embed_batch, retrieved_batch);
    return relu_eval(batchnorm_eval(affine_eval(concat, fusion_.weight.value, fusion_.bias.value),
                                    fusion_.bn));
}

ForwardResult NeuroClassifier::forward(const Tensor& fused_batch, GateMode mode) const {
    if (fused_batch.cols != d_prime_)
        throw DimensionError("forward: fused input " + fused_batch.shape_str() + " vs d' " +
                             std::to_string(d_prime_));
    ForwardResult result;
    Tensor h = fused_batch;
    for (const ModularBlock& blk : blocks_) {
        const double gamma = blk.gamma();
        result.gate_values.push_back(gamma);
        if (mode == GateMode::HardInfer) {
            const bool fire = gamma > tau_;
            result.fired.push_back(fire ? 1 : 0);
            if (fire) h = relu_eval(affine_eval(h, blk.weight.value, blk.bias.value));
            // skipped blocks leave h bitwise unchanged
        } else {
            result.fired.push_back(1);
            const Tensor a = relu_eval(affine_eval(h, blk.weight.value, blk.bias.value));
            for (std::size_t i = 0; i < h.data.size(); ++i)
                h.data[i] = gamma * a.data[i] + (1.0 - gamma) * h.data[i];
        }
    }
    result.logits = affine_eval(h, head_weight_.value, head_bias_.value);
    result.probs = softmax_rows(result.logits);
    return result;
}

std::vector<int> NeuroClassifier::argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows, 0);
    for (std::size_t b = 0; b < logits.rows; ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (logits(b, c) > logits(b, best)) best = c;  // strict: ties go to the lower index
        out[b] = static_cast<int>(best);
    }
    return out;
}

std::vector<int> NeuroClassifier::predict(const Tensor& fused_batch) const {
    return argmax_rows(forward(fused_batch, GateMode::HardInfer).logits);
}

NodeId NeuroClassifier::fuse_on_tape(Tape& tape, const Tensor& embed_batch,
                                     const Tensor& retrieved_batch, bool update_running) {
    if (embed_batch.cols != d_embed_ || retrieved_batch.cols != d_embed_)
        throw DimensionError("fuse: expected embedding dim " + std::to_string(d_embed_));
    NodeId x = tape.constant(concat_cols(embed_batch, retrieved_batch));
    NodeId a = tape.affine(x, tape.param(fusion_.weight), tape.param(fusion_.bias));
    NodeId n = tape.batchnorm(a, tape.param(fusion_.bn.scale), tape.param(fusion_.bn.shift),
                              fusion_.bn, update_running);
    return tape.relu(n);
}

NodeId NeuroClassifier::forward_on_tape(Tape& tape, NodeId fused) {
    NodeId h = fused;
    for (ModularBlock& blk : blocks_) {
        NodeId a = tape.relu(tape.affine(h, tape.param(blk.weight), tape.param(blk.bias)));
        NodeId gamma = tape.sigmoid_scalar(tape.param(blk.gate));
        h = tape.blend(gamma, a, h);
    }
    return tape.affine(h, tape.param(head_weight_), tape.param(head_bias_));
}

std::vector<std::uint64_t> NeuroClassifier::grow(std::size_t count, std::uint64_t epoch, Rng& rng) {
    if (blocks_.size() + count > max_blocks_)
        throw CapacityError("grow: " + std::to_string(blocks_.size()) + " + " +
                            std::to_string(count) + " blocks exceeds cap " +
                            std::to_string(max_blocks_));
    std::vector<std::uint64_t> serials;
    for (std::size_t i = 0; i < count; ++i) {
        ModularBlock b = make_block(epoch, &rng);
        serials.push_back(b.serial);
        blocks_.push_back(std::move(b));
    }
    return serials;
}

ParameterCensus NeuroClassifier::parameter_census() const {
    ParameterCensus census;
    census.total = fusion_.weight.value.size() + fusion_.bias.value.size() +
                   fusion_.bn.scale.value.size() + fusion_.bn.shift.value.size() +
                   head_weight_.value.size() + head_bias_.value.size();
    for (const ModularBlock& blk : blocks_) {
        const std::size_t n = blk.weight.value.size() + blk.bias.value.size() + blk.gate.value.size();
        census.per_block.push_back(n);
        census.total += n;
        if (blk.gamma() > tau_) ++census.active_blocks;
    }
    return census;
}

std::vector<Parameter*> NeuroClassifier::parameters() {
    std::vector<Parameter*> out{&fusion_.weight, &fusion_.bias, &fusion_.bn.scale,
                                &fusion_.bn.shift};
    for (ModularBlock& blk : blocks_) {
        out.push_back(&blk.weight);
        out.push_back(&blk.bias);
        out.push_back(&blk.gate);
    }
    out.push_back(&head_weight_);
    out.push_back(&head_bias_);
    return out;
}

std::vector<const Parameter*> NeuroClassifier::parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<NeuroClassifier*>(this)->parameters()) out.push_back(p);
    return out;
}

}  // namespace npmc
