#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "npmc/autodiff.hpp"

namespace npmc {

struct AdamConfig {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

// Per-parameter moments. t is per parameter so blocks added mid-training get
// correct bias correction from their own first step.
struct AdamState {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    // One Adam step: reads Parameter::grad, updates values in place.
    void step(const std::vector<Parameter*>& params);

    const AdamConfig& config() const { return cfg_; }
    const std::unordered_map<std::string, AdamState>& states() const { return states_; }
    AdamState& state_for(const Parameter& p);
    void set_state(const std::string& id, AdamState s) { states_[id] = std::move(s); }

private:
    AdamConfig cfg_;
    std::unordered_map<std::string, AdamState> states_;
};

}  // namespace npmc
