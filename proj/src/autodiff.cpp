#include "npmc/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace npmc {

Tensor affine_eval(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.cols != weight.cols)
        throw DimensionError("affine: input " + input.shape_str() + " incompatible with weight " +
                             weight.shape_str());
    if (bias.size() != weight.rows)
        throw DimensionError("affine: bias " + bias.shape_str() + " incompatible with weight " +
                             weight.shape_str());
    const std::size_t batch = input.rows, d_in = input.cols, d_out = weight.rows;
    Tensor out(batch, d_out);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = &input.data[b * d_in];
        double* y = &out.data[b * d_out];
        for (std::size_t j = 0; j < d_out; ++j) {
            const double* w = &weight.data[j * d_in];
            double acc = bias.data[j];
            for (std::size_t k = 0; k < d_in; ++k) acc += w[k] * x[k];
            y[j] = acc;
        }
    }
    return out;
}

Tensor relu_eval(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor batchnorm_eval(const Tensor& input, const BatchNormState& state) {
    if (input.cols != state.dim())
        throw DimensionError("batchnorm: input " + input.shape_str() + " vs feature dim " +
                             std::to_string(state.dim()));
    Tensor out(input.rows, input.cols);
    for (std::size_t j = 0; j < input.cols; ++j) {
        const double inv_std = 1.0 / std::sqrt(state.running_var[j] + state.epsilon);
        const double g = state.scale.value.data[j], s = state.shift.value.data[j];
        const double mu = state.running_mean[j];
        for (std::size_t b = 0; b < input.rows; ++b)
            out(b, j) = g * (input(b, j) - mu) * inv_std + s;
    }
    return out;
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.cols == 0) throw DimensionError("softmax: zero classes");
    Tensor out(logits.rows, logits.cols);
    for (std::size_t b = 0; b < logits.rows; ++b) {
        double mx = logits(b, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits(b, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            out(b, c) = std::exp(logits(b, c) - mx);
            denom += out(b, c);
        }
        for (std::size_t c = 0; c < logits.cols; ++c) out(b, c) /= denom;
    }
    return out;
}

double cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    if (labels.size() != probs.rows)
        throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(probs.rows) + " rows");
    double total = 0.0;
    for (std::size_t b = 0; b < probs.rows; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols)
            throw ContractError("cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(probs.cols) + ")");
        total += -std::log(std::max(probs(b, static_cast<std::size_t>(y)), 1e-12));
    }
    return total / static_cast<double>(probs.rows);
}

NodeId Tape::push(Tensor value, Parameter* owner) {
    Node n;
    n.grad = Tensor(value.rows, value.cols);
    n.value = std::move(value);
    n.owner = owner;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor value) {
    NodeId id = push(std::move(value));
    nodes_[id].grad = Tensor();  // marks gradient-free leaf
    return id;
}

NodeId Tape::input(Tensor value) { return push(std::move(value)); }

NodeId Tape::param(Parameter& p) { return push(p.value, &p); }

namespace {
// Adds g into the target node's grad unless it is a gradient-free constant.
void add_grad(Tensor& dst, const Tensor& g) {
    if (dst.data.empty()) return;
    for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
}
}  // namespace

NodeId Tape::affine(NodeId input, NodeId weight, NodeId bias) {
    const Tensor& x = nodes_[input].value;
    const Tensor& w = nodes_[weight].value;
    const Tensor& b = nodes_[bias].value;
    NodeId out = push(affine_eval(x, w, b));
    nodes_[out].back = [input, weight, bias, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        const Tensor& x = t.nodes_[input].value;
        const Tensor& w = t.nodes_[weight].value;
        const std::size_t batch = x.rows, d_in = x.cols, d_out = w.rows;
        Tensor& gx = t.nodes_[input].grad;
        if (!gx.data.empty()) {
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t j = 0; j < d_out; ++j) {
                    const double gj = g(bi, j);
                    const double* wr = &w.data[j * d_in];
                    double* gxr = &gx.data[bi * d_in];
                    for (std::size_t k = 0; k < d_in; ++k) gxr[k] += gj * wr[k];
                }
        }
        Tensor& gw = t.nodes_[weight].grad;
        if (!gw.data.empty()) {
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t j = 0; j < d_out; ++j) {
                    const double gj = g(bi, j);
                    const double* xr = &x.data[bi * d_in];
                    double* gwr = &gw.data[j * d_in];
                    for (std::size_t k = 0; k < d_in; ++k) gwr[k] += gj * xr[k];
                }
        }
        Tensor& gb = t.nodes_[bias].grad;
        if (!gb.data.empty()) {
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t j = 0; j < d_out; ++j) gb.data[j] += g(bi, j);
        }
    };
    return out;
}

NodeId Tape::relu(NodeId input) {
    NodeId out = push(relu_eval(nodes_[input].value));
    nodes_[out].back = [input, out](Tape& t) {
        const Tensor& g = t.nodes_[out].grad;
        const Tensor& x = t.nodes_[input].value;
        Tensor& gx = t.nodes_[input].grad;
        if (gx.data.empty()) return;
        // subgradient at exactly 0 is 0
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] > 0.0) gx.data[i] += g.data[i];
    };
    return out;
}

NodeId Tape::sigmoid_scalar(NodeId input) {
    const Tensor& x = nodes_[input].value;
    if (x.size() != 1) throw ContractError("sigmoid_scalar: expected 1x1, got " + x.shape_str());
    Tensor v(1, 1);
    v.data[0] = sigmoid(x.data[0]);
    NodeId out = push(std::move(v));
    nodes_[out].back = [input, out](Tape& t) {
        const double s = t.nodes_[out].value.data[0];
        const double g = t.nodes_[out].grad.data[0];
        Tensor& gx = t.nodes_[input].grad;
        if (!gx.data.empty()) gx.data[0] += g * s * (1.0 - s);
    };
    return out;
}

NodeId Tape::blend(NodeId gamma, NodeId a, NodeId b) {
    const Tensor& gt = nodes_[gamma].value;
    if (gt.size() != 1) throw ContractError("blend: gamma must be scalar");
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    require_shape(av, bv, "blend");
    const double gm = gt.data[0];
    Tensor out(av.rows, av.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = gm * av.data[i] + (1.0 - gm) * bv.data[i];
    NodeId id = push(std::move(out));
    nodes_[id].back = [gamma, a, b, id](Tape& t) {
        const Tensor& g = t.nodes_[id].grad;
        const double gm = t.nodes_[gamma].value.data[0];
        const Tensor& av = t.nodes_[a].value;
        const Tensor& bv = t.nodes_[b].value;
        Tensor& ga = t.nodes_[a].grad;
        Tensor& gb = t.nodes_[b].grad;
        Tensor& gg = t.nodes_[gamma].grad;
        double dg = 0.0;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (!ga.data.empty()) ga.data[i] += gm * g.data[i];
            if (!gb.data.empty()) gb.data[i] += (1.0 - gm) * g.data[i];
            dg += g.data[i] * (av.data[i] - bv.data[i]);
        }
        if (!gg.data.empty()) gg.data[0] += dg;
    };
    return id;
}

NodeId Tape::batchnorm(NodeId input, NodeId scale, NodeId shift, BatchNormState& state,
                       bool update_running) {
    const Tensor& x = nodes_[input].value;
    if (x.cols != state.dim())
        throw DimensionError("batchnorm: input " + x.shape_str() + " vs feature dim " +
                             std::to_string(state.dim()));
    const std::size_t batch = x.rows, d = x.cols;

    if (state.mode == BnMode::Eval) {
        Tensor out = batchnorm_eval(x, state);
        NodeId id = push(std::move(out));
        nodes_[id].back = [input, scale, shift, id, &state](Tape& t) {
            const Tensor& g = t.nodes_[id].grad;
            const Tensor& x = t.nodes_[input].value;
            Tensor& gx = t.nodes_[input].grad;
            Tensor& gs = t.nodes_[scale].grad;
            Tensor& gh = t.nodes_[shift].grad;
            for (std::size_t j = 0; j < x.cols; ++j) {
                const double inv_std = 1.0 / std::sqrt(state.running_var[j] + state.epsilon);
                const double sc = t.nodes_[scale].value.data[j];
                for (std::size_t b = 0; b < x.rows; ++b) {
                    const double xh = (x(b, j) - state.running_mean[j]) * inv_std;
                    if (!gx.data.empty()) gx.data[b * x.cols + j] += g(b, j) * sc * inv_std;
                    if (!gs.data.empty()) gs.data[j] += g(b, j) * xh;
                    if (!gh.data.empty()) gh.data[j] += g(b, j);
                }
            }
        };
        return id;
    }

    if (batch < 2)
        throw ContractError("batchnorm: train mode needs batch >= 2, got " + std::to_string(batch));

    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t b = 0; b < batch; ++b) m += x(b, j);
        m /= static_cast<double>(batch);
        double v = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double c = x(b, j) - m;
            v += c * c;
        }
        mean[j] = m;
        var[j] = v / static_cast<double>(batch);  // biased (1/batch) divisor
    }

    if (update_running) {
        for (std::size_t j = 0; j < d; ++j) {
            state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
            state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j];
        }
    }

    const Tensor& sc = nodes_[scale].value;
    const Tensor& sh = nodes_[shift].value;
    Tensor xhat(batch, d), out(batch, d);
    for (std::size_t j = 0; j < d; ++j) {
        const double inv_std = 1.0 / std::sqrt(var[j] + state.epsilon);
        for (std::size_t b = 0; b < batch; ++b) {
            const double h = (x(b, j) - mean[j]) * inv_std;
            xhat(b, j) = h;
            out(b, j) = sc.data[j] * h + sh.data[j];
        }
    }

    NodeId id = push(std::move(out));
    nodes_[id].back = [input, scale, shift, id, xhat, var, eps = state.epsilon](Tape& t) {
        const Tensor& g = t.nodes_[id].grad;
        const std::size_t batch = g.rows, d = g.cols;
        Tensor& gx = t.nodes_[input].grad;
        Tensor& gs = t.nodes_[scale].grad;
        Tensor& gh = t.nodes_[shift].grad;
        const Tensor& sc = t.nodes_[scale].value;
        for (std::size_t j = 0; j < d; ++j) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                sum_g += g(b, j);
                sum_gx += g(b, j) * xhat(b, j);
            }
            if (!gs.data.empty()) gs.data[j] += sum_gx;
            if (!gh.data.empty()) gh.data[j] += sum_g;
            if (!gx.data.empty()) {
                const double inv_std = 1.0 / std::sqrt(var[j] + eps);
                const double n = static_cast<double>(batch);
                for (std::size_t b = 0; b < batch; ++b)
                    gx.data[b * d + j] +=
                        sc.data[j] * inv_std * (g(b, j) - sum_g / n - xhat(b, j) * sum_gx / n);
            }
        }
    };
    return id;
}

NodeId Tape::softmax(NodeId logits) {
    NodeId out = push(softmax_rows(nodes_[logits].value));
    nodes_[out].back = [logits, out](Tape& t) {
        const Tensor& p = t.nodes_[out].value;
        const Tensor& g = t.nodes_[out].grad;
        Tensor& gx = t.nodes_[logits].grad;
        if (gx.data.empty()) return;
        for (std::size_t b = 0; b < p.rows; ++b) {
            double dot = 0.0;
            for (std::size_t c = 0; c < p.cols; ++c) dot += g(b, c) * p(b, c);
            for (std::size_t c = 0; c < p.cols; ++c)
                gx.data[b * p.cols + c] += p(b, c) * (g(b, c) - dot);
        }
    };
    return out;
}

NodeId Tape::cross_entropy(NodeId probs, std::vector<int> labels) {
    const Tensor& p = nodes_[probs].value;
    Tensor loss(1, 1);
    loss.data[0] = npmc::cross_entropy(p, labels);
    NodeId out = push(std::move(loss));
    nodes_[out].back = [probs, out, labels = std::move(labels)](Tape& t) {
        const double g = t.nodes_[out].grad.data[0];
        const Tensor& p = t.nodes_[probs].value;
        Tensor& gp = t.nodes_[probs].grad;
        if (gp.data.empty()) return;
        const double n = static_cast<double>(p.rows);
        for (std::size_t b = 0; b < p.rows; ++b) {
            const std::size_t y = static_cast<std::size_t>(labels[b]);
            gp.data[b * p.cols + y] += g * (-1.0 / (n * std::max(p(b, y), 1e-12)));
        }
    };
    return out;
}

NodeId Tape::sum(NodeId input) {
    const Tensor& x = nodes_[input].value;
    Tensor v(1, 1);
    for (double e : x.data) v.data[0] += e;
    NodeId out = push(std::move(v));
    nodes_[out].back = [input, out](Tape& t) {
        const double g = t.nodes_[out].grad.data[0];
        Tensor& gx = t.nodes_[input].grad;
        for (double& e : gx.data) e += g;
    };
    return out;
}

void Tape::backward(NodeId loss) {
    if (nodes_.empty()) throw ContractError("backward: empty tape");
    if (nodes_[loss].value.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + nodes_[loss].value.shape_str());
    for (Node& n : nodes_)
        if (!n.grad.data.empty()) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    nodes_[loss].grad.data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;)
        if (nodes_[i].back) nodes_[i].back(*this);
    for (Node& n : nodes_)
        if (n.owner) add_grad(n.owner->grad, n.grad);
}

void zero_grads(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

GradCheckReport grad_check(const std::vector<Parameter*>& params,
                           const std::function<double()>& loss_value, double h) {
    GradCheckReport report;
    for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const double up = loss_value();
            p->value.data[i] = saved - h;
            const double down = loss_value();
            p->value.data[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad.data[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
            const double rel = std::abs(numeric - analytic) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p->id;
                report.worst_index = i;
            }
        }
    }
    return report;
}

}  // namespace npmc
