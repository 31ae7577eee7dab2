#include "npmc/adam.hpp"

#include <cmath>

namespace npmc {

void AdamConfig::validate() const {
    if (!(alpha >= 0.0)) throw ContractError("adam: alpha must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ContractError("adam: beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("adam: beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw ContractError("adam: eps must be > 0");
}

AdamState& AdamOptimizer::state_for(const Parameter& p) {
    auto it = states_.find(p.id);
    if (it == states_.end()) {
        AdamState s;
        s.m = Tensor(p.value.rows, p.value.cols);
        s.v = Tensor(p.value.rows, p.value.cols);
        it = states_.emplace(p.id, std::move(s)).first;
    }
    return it->second;
}

void AdamOptimizer::step(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        AdamState& st = state_for(*p);
        if (!st.m.same_shape(p->grad))
            throw ContractError("adam: state shape " + st.m.shape_str() + " vs grad " +
                                p->grad.shape_str() + " for " + p->id);
        st.t += 1;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = p->grad.data[i];
            st.m.data[i] = cfg_.beta1 * st.m.data[i] + (1.0 - cfg_.beta1) * g;
            st.v.data[i] = cfg_.beta2 * st.v.data[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = st.m.data[i] / bc1;
            const double v_hat = st.v.data[i] / bc2;
            p->value.data[i] -= cfg_.alpha * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

}  // namespace npmc
