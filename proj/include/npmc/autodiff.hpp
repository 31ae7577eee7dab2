#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "npmc/tensor.hpp"

namespace npmc {

// Learnable tensor with persistent accumulated gradient.
struct Parameter {
    std::string id;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name, Tensor v)
        : id(std::move(name)), value(std::move(v)), grad(value.rows, value.cols) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

enum class BnMode { Train, Eval };

// Batch normalization over the feature (column) axis.
struct BatchNormState {
    Parameter scale;  // 1 x d, init 1
    Parameter shift;  // 1 x d, init 0
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
    BnMode mode = BnMode::Train;

    BatchNormState() = default;
    BatchNormState(const std::string& prefix, std::size_t d)
        : scale(prefix + ".scale", Tensor(1, d, 1.0)),
          shift(prefix + ".shift", Tensor(1, d, 0.0)),
          running_mean(d, 0.0),
          running_var(d, 1.0) {}

    std::size_t dim() const { return running_mean.size(); }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Pure (tape-free) evaluation primitives, used on the inference path.
Tensor affine_eval(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor relu_eval(const Tensor& input);
Tensor batchnorm_eval(const Tensor& input, const BatchNormState& state);
Tensor softmax_rows(const Tensor& logits);
double cross_entropy(const Tensor& probs, const std::vector<int>& labels);

using NodeId = std::size_t;

// Dynamically built computation tape for reverse-mode differentiation.
// The graph is rebuilt every forward pass; backward() accumulates into the
// grad of every Parameter reachable from the loss.
class Tape {
public:
    NodeId constant(Tensor value);            // no gradient flow
    NodeId input(Tensor value);               // leaf whose gradient is kept on the tape
    NodeId param(Parameter& p);               // leaf tied to a Parameter

    // output[b][j] = sum_k weight[j][k] * input[b][k] + bias[j]
    NodeId affine(NodeId input, NodeId weight, NodeId bias);
    NodeId relu(NodeId input);
    NodeId sigmoid_scalar(NodeId input);      // 1x1 -> 1x1
    // gamma*a + (1-gamma)*b with scalar gamma
    NodeId blend(NodeId gamma, NodeId a, NodeId b);
    // Train mode uses batch statistics (1/batch variance) and, when
    // update_running is set, folds them into the running stats. Eval mode
    // normalizes by running stats and never mutates state.
    NodeId batchnorm(NodeId input, NodeId scale, NodeId shift, BatchNormState& state,
                     bool update_running = true);
    NodeId softmax(NodeId logits);
    // Mean over the batch of -log p[b][labels[b]], probabilities clamped at 1e-12.
    NodeId cross_entropy(NodeId probs, std::vector<int> labels);
    NodeId sum(NodeId input);                 // reduce to 1x1, for tests

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse-topological sweep from a scalar loss node. Accumulates (+=)
    // into Parameter::grad; repeated calls without zeroing double gradients.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;  // reads this node's grad, adds into inputs'
        Parameter* owner = nullptr;
    };

    NodeId push(Tensor value, Parameter* owner = nullptr);

    std::vector<Node> nodes_;
};

void zero_grads(const std::vector<Parameter*>& params);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

// Central finite differences against the analytic gradients currently stored
// in each Parameter::grad. loss_value must be a pure function of the
// parameter values (it is re-evaluated O(P) times).
GradCheckReport grad_check(const std::vector<Parameter*>& params,
                           const std::function<double()>& loss_value, double h = 1e-6);

}  // namespace npmc
