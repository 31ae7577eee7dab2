#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "npmc/errors.hpp"

namespace npmc {

// Validation loss per epoch; epochs strictly increasing starting at 1.
struct LossHistory {
    struct Entry {
        std::uint64_t epoch;
        double val_loss;
    };
    std::vector<Entry> entries;

    void push(std::uint64_t epoch, double val_loss);
    std::optional<double> at_epoch(std::uint64_t epoch) const;
};

enum class GrowthPolicyKind { ImprovementDelta, SlopeWindow, AbsoluteThreshold };

std::string to_string(GrowthPolicyKind kind);
GrowthPolicyKind growth_policy_from_string(const std::string& name);

struct GrowthConfig {
    GrowthPolicyKind policy = GrowthPolicyKind::ImprovementDelta;
    std::uint64_t interval = 3;      // T_g: check cadence in epochs
    double epsilon = 1e-3;           // improvement / slope tolerance
    double lambda = 1.0;             // absolute-threshold variant only
    std::uint64_t grow_count = 3;    // G: blocks appended per event
    std::size_t max_blocks = 64;
    std::size_t initial_blocks = 15; // B_0
    bool enabled = true;

    void validate() const;
};

struct GrowthEvent {
    std::uint64_t epoch = 0;
    std::uint64_t blocks_added = 0;
    std::string policy;
    std::vector<double> triggering_values;
};

struct GrowthDecision {
    std::optional<GrowthEvent> event;
    bool suppressed_by_cap = false;  // condition fired but max_blocks blocked it
};

// Pure function of (history, config, current block count). Only evaluates at
// epochs divisible by the interval; insufficient history never triggers.
GrowthDecision should_grow(const LossHistory& history, const GrowthConfig& config,
                           std::size_t current_blocks);

// Append-only audit trail; serialized as one JSON object per line.
class GrowthLog {
public:
    void record(GrowthEvent event) { events_.push_back(std::move(event)); }
    void note_suppressed(std::uint64_t epoch) { suppressed_epochs_.push_back(epoch); }

    // Expected final block count: B_0 + sum of blocks_added.
    std::size_t replay(std::size_t initial_blocks) const;

    const std::vector<GrowthEvent>& events() const { return events_; }
    const std::vector<std::uint64_t>& suppressed_epochs() const { return suppressed_epochs_; }

    std::string to_jsonl() const;
    static GrowthLog from_jsonl(const std::string& text);

private:
    std::vector<GrowthEvent> events_;
    std::vector<std::uint64_t> suppressed_epochs_;
};

}  // namespace npmc
