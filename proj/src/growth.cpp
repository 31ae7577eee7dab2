#include "npmc/growth.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace npmc {

void LossHistory::push(std::uint64_t epoch, double val_loss) {
    if (epoch < 1) throw ContractError("loss history: epochs start at 1");
    if (!entries.empty() && epoch <= entries.back().epoch)
        throw ContractError("loss history: epochs must be strictly increasing");
    entries.push_back(Entry{epoch, val_loss});
}

std::optional<double> LossHistory::at_epoch(std::uint64_t epoch) const {
    for (const Entry& e : entries)
        if (e.epoch == epoch) return e.val_loss;
    return std::nullopt;
}

std::string to_string(GrowthPolicyKind kind) {
    switch (kind) {
        case GrowthPolicyKind::ImprovementDelta: return "improvement-delta";
        case GrowthPolicyKind::SlopeWindow: return "slope-window";
        case GrowthPolicyKind::AbsoluteThreshold: return "absolute-threshold";
    }
    throw ContractError("unknown growth policy");
}

GrowthPolicyKind growth_policy_from_string(const std::string& name) {
    if (name == "improvement-delta") return GrowthPolicyKind::ImprovementDelta;
    if (name == "slope-window") return GrowthPolicyKind::SlopeWindow;
    if (name == "absolute-threshold") return GrowthPolicyKind::AbsoluteThreshold;
    throw ConfigError("unknown growth policy: " + name);
}

void GrowthConfig::validate() const {
    if (interval < 1) throw ConfigError("growth.interval must be >= 1");
    if (!(epsilon > 0.0)) throw ConfigError("growth.epsilon must be > 0");
    if (grow_count < 1) throw ConfigError("growth.grow_count must be >= 1");
    if (initial_blocks < 1) throw ConfigError("growth.initial_blocks must be >= 1");
    if (max_blocks < initial_blocks) throw ConfigError("growth.max_blocks must be >= initial_blocks");
}

GrowthDecision should_grow(const LossHistory& history, const GrowthConfig& config,
                           std::size_t current_blocks) {
    GrowthDecision decision;
    if (!config.enabled || history.entries.empty()) return decision;

    const std::uint64_t t = history.entries.back().epoch;
    if (t % config.interval != 0) return decision;
    const double current = history.entries.back().val_loss;

    bool triggered = false;
    std::vector<double> values;
    switch (config.policy) {
        case GrowthPolicyKind::ImprovementDelta: {
            const auto prev = history.at_epoch(t - 1);
            if (!prev) return decision;
            values = {*prev, current};
            triggered = (*prev - current) < config.epsilon;
            break;
        }
        case GrowthPolicyKind::SlopeWindow: {
            const auto past = history.at_epoch(t - config.interval);
            if (!past) return decision;
            values = {*past, current};
            triggered = std::abs(current - *past) < config.epsilon;
            break;
        }
        case GrowthPolicyKind::AbsoluteThreshold: {
            values = {current};
            triggered = current > config.lambda;
            break;
        }
    }
    if (!triggered) return decision;

    if (current_blocks + config.grow_count > config.max_blocks) {
        decision.suppressed_by_cap = true;
        return decision;
    }
    decision.event = GrowthEvent{t, config.grow_count, to_string(config.policy), std::move(values)};
    return decision;
}

std::size_t GrowthLog::replay(std::size_t initial_blocks) const {
    std::size_t count = initial_blocks;
    for (const GrowthEvent& e : events_) count += e.blocks_added;
    return count;
}

std::string GrowthLog::to_jsonl() const {
    std::ostringstream out;
    for (const GrowthEvent& e : events_) {
        nlohmann::ordered_json j;
        j["epoch"] = e.epoch;
        j["blocks_added"] = e.blocks_added;
        j["policy"] = e.policy;
        j["values"] = e.triggering_values;
        out << j.dump() << "\n";
    }
    for (std::uint64_t epoch : suppressed_epochs_) {
        nlohmann::ordered_json j;
        j["epoch"] = epoch;
        j["suppressed"] = true;
        out << j.dump() << "\n";
    }
    return out.str();
}

GrowthLog GrowthLog::from_jsonl(const std::string& text) {
    GrowthLog log;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.value("suppressed", false)) {
            log.suppressed_epochs_.push_back(j.at("epoch").get<std::uint64_t>());
            continue;
        }
        GrowthEvent e;
        e.epoch = j.at("epoch").get<std::uint64_t>();
        e.blocks_added = j.at("blocks_added").get<std::uint64_t>();
        e.policy = j.at("policy").get<std::string>();
        e.triggering_values = j.at("values").get<std::vector<double>>();
        log.events_.push_back(std::move(e));
    }
    return log;
}

}  // namespace npmc
