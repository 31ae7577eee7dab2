#include "npmc/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "npmc/binio.hpp"

namespace npmc {

void SplitSpec::validate() const {
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
        throw ConfigError("split: fractions must sum to 1");
    if (train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0)
        throw ConfigError("split: fractions must be nonnegative with train > 0");
}

namespace {

EmbeddingDataset take_slice(const EmbeddingDataset& ds, const std::vector<std::size_t>& order,
                            std::size_t begin, std::size_t end) {
    EmbeddingDataset out;
    out.d = ds.d;
    out.class_count = ds.class_count;
    out.n = end - begin;
    out.vectors.reserve(out.n * out.d);
    out.labels.reserve(out.n);
    for (std::size_t i = begin; i < end; ++i) {
        const std::size_t src = order[i];
        out.vectors.insert(out.vectors.end(), ds.row(src), ds.row(src) + ds.d);
        out.labels.push_back(ds.labels[src]);
    }
    return out;
}

}  // namespace

Splits split_dataset(const EmbeddingDataset& dataset, const SplitSpec& spec) {
    spec.validate();
    if (dataset.n < 10) throw ContractError("split: need at least 10 samples");

    std::vector<std::size_t> order(dataset.n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed);
    rng.shuffle(order);

    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(dataset.n)));
    const std::size_t n_val =
        static_cast<std::size_t>(std::floor(spec.val_fraction * static_cast<double>(dataset.n)));

    Splits s;
    s.train = take_slice(dataset, order, 0, n_train);
    s.val = take_slice(dataset, order, n_train, n_train + n_val);
    s.test = take_slice(dataset, order, n_train + n_val, dataset.n);
    return s;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batchnorm)");
    if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must be in (0, 1)");
    if (d_prime < 1) throw ConfigError("d_prime must be >= 1");
    adam.validate();
    growth.validate();
}

void to_json(nlohmann::ordered_json& j, const TrainConfig& cfg) {
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["knn_k"] = cfg.knn_k;
    j["adam"] = {{"alpha", cfg.adam.alpha},
                 {"beta1", cfg.adam.beta1},
                 {"beta2", cfg.adam.beta2},
                 {"eps", cfg.adam.eps}};
    j["growth"] = {{"policy", to_string(cfg.growth.policy)},
                   {"interval", cfg.growth.interval},
                   {"epsilon", cfg.growth.epsilon},
                   {"lambda", cfg.growth.lambda},
                   {"grow_count", cfg.growth.grow_count},
                   {"max_blocks", cfg.growth.max_blocks},
                   {"initial_blocks", cfg.growth.initial_blocks},
                   {"enabled", cfg.growth.enabled}};
    j["tau"] = cfg.tau;
    j["d_prime"] = cfg.d_prime;
    j["seed"] = cfg.seed;
    if (cfg.memory_capacity)
        j["memory_capacity"] = *cfg.memory_capacity;
    else
        j["memory_capacity"] = nullptr;
    j["exclude_exact"] = cfg.exclude_exact;
    j["use_memory"] = cfg.use_memory;
    if (cfg.early_stop_patience)
        j["early_stop_patience"] = *cfg.early_stop_patience;
    else
        j["early_stop_patience"] = nullptr;
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    cfg = TrainConfig{};
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("epochs", cfg.epochs);
    get("batch_size", cfg.batch_size);
    get("knn_k", cfg.knn_k);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        cfg.adam.alpha = a.value("alpha", cfg.adam.alpha);
        cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
        cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
        cfg.adam.eps = a.value("eps", cfg.adam.eps);
    }
    if (j.contains("growth")) {
        const auto& g = j.at("growth");
        if (g.contains("policy")) cfg.growth.policy = growth_policy_from_string(g.at("policy"));
        cfg.growth.interval = g.value("interval", cfg.growth.interval);
        cfg.growth.epsilon = g.value("epsilon", cfg.growth.epsilon);
        cfg.growth.lambda = g.value("lambda", cfg.growth.lambda);
        cfg.growth.grow_count = g.value("grow_count", cfg.growth.grow_count);
        cfg.growth.max_blocks = g.value("max_blocks", cfg.growth.max_blocks);
        cfg.growth.initial_blocks = g.value("initial_blocks", cfg.growth.initial_blocks);
        cfg.growth.enabled = g.value("enabled", cfg.growth.enabled);
    }
    get("tau", cfg.tau);
    get("d_prime", cfg.d_prime);
    get("seed", cfg.seed);
    if (j.contains("memory_capacity")) {
        if (j.at("memory_capacity").is_null())
            cfg.memory_capacity = std::nullopt;
        else
            cfg.memory_capacity = j.at("memory_capacity").get<std::size_t>();
    }
    get("exclude_exact", cfg.exclude_exact);
    get("use_memory", cfg.use_memory);
    if (j.contains("early_stop_patience") && !j.at("early_stop_patience").is_null())
        cfg.early_stop_patience = j.at("early_stop_patience").get<std::uint64_t>();
}

namespace {
std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

std::string LogRow::csv_header() {
    return "epoch,train_loss,train_acc,val_loss,val_acc,n_blocks,active_blocks,memory_size,growth_event";
}

std::string LogRow::to_csv_row() const {
    std::string out = std::to_string(epoch);
    out += ',' + fmt_double(train_loss);
    out += ',' + fmt_double(train_acc);
    out += ',' + fmt_double(val_loss);
    out += ',' + fmt_double(val_acc);
    out += ',' + std::to_string(n_blocks);
    out += ',' + std::to_string(active_blocks);
    out += ',' + std::to_string(memory_size);
    out += ',' + std::to_string(growth_event);
    return out;
}

Trainer::Trainer(TrainConfig cfg, std::size_t d_embed, std::size_t class_count)
    : cfg_(std::move(cfg)),
      d_embed_(d_embed),
      class_count_(class_count),
      opt_(cfg_.adam),
      memory_(d_embed, cfg_.memory_capacity),
      rng_(cfg_.seed) {
    cfg_.validate();
    model_ = NeuroClassifier(d_embed, cfg_.d_prime, class_count, cfg_.growth.initial_blocks,
                             cfg_.tau, cfg_.growth.max_blocks, rng_);
}

Tensor Trainer::batch_inputs(const EmbeddingDataset& ds, const std::vector<std::size_t>& idx,
                             Tensor& retrieved, bool training) const {
    const std::size_t b = idx.size();
    Tensor embed(b, d_embed_);
    retrieved = Tensor(b, d_embed_);
    for (std::size_t i = 0; i < b; ++i) {
        const std::vector<double> q = ds.row_vec(idx[i]);
        std::copy(q.begin(), q.end(), &embed.data[i * d_embed_]);
        if (cfg_.use_memory && memory_.size() > 0) {
            const bool exclude = training && cfg_.exclude_exact;
            const auto hits = memory_.search_knn(q, cfg_.knn_k, exclude);
            const std::vector<double> mean = memory_.aggregate_mean(hits);
            std::copy(mean.begin(), mean.end(), &retrieved.data[i * d_embed_]);
        }
        // cold start / memory disabled: retrieved row stays zero
    }
    return embed;
}

std::pair<double, double> Trainer::train_epoch(const EmbeddingDataset& train, std::uint64_t epoch) {
    if (train.d != d_embed_) throw DimensionError("train: dataset dim mismatch");
    model_.set_bn_mode(BnMode::Train);

    std::vector<std::size_t> order(train.n);
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);

    // Chunk into batches; a trailing singleton is folded into the previous
    // batch because train-mode batchnorm requires batch >= 2.
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < train.n; start += cfg_.batch_size) {
        const std::size_t end = std::min(train.n, start + cfg_.batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    const std::vector<Parameter*> params = model_.parameters();

    for (const std::vector<std::size_t>& idx : batches) {
        Tensor retrieved;
        const Tensor embed = batch_inputs(train, idx, retrieved, /*training=*/true);
        std::vector<int> labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train.labels[idx[i]];

        Tape tape;
        NodeId fused = model_.fuse_on_tape(tape, embed, retrieved);
        NodeId logits = model_.forward_on_tape(tape, fused);
        NodeId probs = tape.softmax(logits);
        NodeId loss = tape.cross_entropy(probs, labels);

        zero_grads(params);
        tape.backward(loss);
        opt_.step(params);

        loss_sum += tape.value(loss).data[0] * static_cast<double>(idx.size());
        const std::vector<int> pred = NeuroClassifier::argmax_rows(tape.value(probs));
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (pred[i] == labels[i]) ++correct;

        if (cfg_.use_memory) {
            std::vector<std::vector<double>> vecs;
            vecs.reserve(idx.size());
            for (std::size_t i : idx) vecs.push_back(train.row_vec(i));
            memory_.add_batch(vecs, labels);
        }
    }

    const double n = static_cast<double>(train.n);
    return {loss_sum / n, static_cast<double>(correct) / n};
}

EvalResult Trainer::evaluate(const EmbeddingDataset& ds) const {
    if (ds.d != d_embed_) throw DimensionError("evaluate: dataset dim " + std::to_string(ds.d) +
                                               " vs model dim " + std::to_string(d_embed_));
    EvalResult result;
    result.predictions.reserve(ds.n);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < ds.n; start += chunk) {
        const std::size_t end = std::min(ds.n, start + chunk);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);

        Tensor retrieved;
        const Tensor embed = batch_inputs(ds, idx, retrieved, /*training=*/false);
        const Tensor fused = model_.fuse(embed, retrieved);
        const ForwardResult fr = model_.forward(fused, GateMode::HardInfer);

        std::vector<int> labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = ds.labels[idx[i]];
        loss_sum += cross_entropy(fr.probs, labels) * static_cast<double>(idx.size());
        const std::vector<int> pred = NeuroClassifier::argmax_rows(fr.logits);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            result.predictions.push_back(pred[i]);
            if (pred[i] == labels[i]) ++correct;
        }
    }
    result.loss = ds.n ? loss_sum / static_cast<double>(ds.n) : 0.0;
    result.accuracy = ds.n ? static_cast<double>(correct) / static_cast<double>(ds.n) : 0.0;
    return result;
}

std::vector<LogRow> Trainer::fit(const EmbeddingDataset& train, const EmbeddingDataset& val) {
    std::vector<LogRow> rows;
    double best_val = std::numeric_limits<double>::infinity();
    std::uint64_t since_best = 0;
    // Replay the recorded history so early stopping resumes consistently.
    for (const auto& e : val_history_.entries) {
        if (e.val_loss < best_val) {
            best_val = e.val_loss;
            since_best = 0;
        } else {
            ++since_best;
        }
    }

    for (std::uint64_t epoch = epoch_done_ + 1; epoch <= cfg_.epochs; ++epoch) {
        const auto [train_loss, train_acc] = train_epoch(train, epoch);
        const EvalResult val_result = evaluate(val);
        val_history_.push(epoch, val_result.loss);

        LogRow row;
        row.epoch = epoch;
        row.train_loss = train_loss;
        row.train_acc = train_acc;
        row.val_loss = val_result.loss;
        row.val_acc = val_result.accuracy;

        const GrowthDecision decision = should_grow(val_history_, cfg_.growth, model_.block_count());
        if (decision.event) {
            model_.grow(decision.event->blocks_added, epoch, rng_);
            growth_log_.record(*decision.event);
            row.growth_event = 1;
        } else if (decision.suppressed_by_cap) {
            growth_log_.note_suppressed(epoch);
        }

        row.n_blocks = model_.block_count();
        row.active_blocks = model_.parameter_census().active_blocks;
        row.memory_size = memory_.size();
        rows.push_back(row);
        epoch_done_ = epoch;

        if (cfg_.early_stop_patience) {
            if (val_result.loss < best_val) {
                best_val = val_result.loss;
                since_best = 0;
            } else if (++since_best >= *cfg_.early_stop_patience) {
                break;
            }
        }
    }
    return rows;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_section(ByteWriter& w, const std::string& bytes) {
    w.u64(bytes.size());
    w.bytes(bytes);
}

std::string param_blob(const std::vector<const Parameter*>& params) {
    ByteWriter w;
    for (const Parameter* p : params) {
        w.u64(p->value.rows);
        w.u64(p->value.cols);
        for (double v : p->value.data) w.f64(v);
    }
    return w.str();
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    ByteWriter w;
    w.magic("NPMC");
    w.u32(kCheckpointVersion);

    nlohmann::ordered_json meta;
    nlohmann::ordered_json cfg_json;
    to_json(cfg_json, cfg_);
    meta["config"] = cfg_json;
    meta["d_embed"] = d_embed_;
    meta["class_count"] = class_count_;
    meta["epoch_done"] = epoch_done_;
    meta["next_block_serial"] = model_.next_block_serial();
    meta["blocks"] = nlohmann::ordered_json::array();
    for (const ModularBlock& b : model_.blocks())
        meta["blocks"].push_back({{"serial", b.serial}, {"created_at_epoch", b.created_at_epoch}});
    meta["val_history"] = nlohmann::ordered_json::array();
    for (const auto& e : val_history_.entries)
        meta["val_history"].push_back({{"epoch", e.epoch}, {"val_loss", e.val_loss}});
    write_section(w, meta.dump());

    write_section(w, param_blob(model_.parameters()));

    ByteWriter adam;
    const auto params = model_.parameters();
    adam.u64(params.size());
    for (const Parameter* p : params) {
        const auto it = opt_.states().find(p->id);
        adam.u8(it != opt_.states().end() ? 1 : 0);
        if (it != opt_.states().end()) {
            adam.u64(it->second.t);
            for (double v : it->second.m.data) adam.f64(v);
            for (double v : it->second.v.data) adam.f64(v);
        }
    }
    write_section(w, adam.str());

    ByteWriter bn;
    const BatchNormState& state = model_.fusion().bn;
    bn.u64(state.dim());
    for (double v : state.running_mean) bn.f64(v);
    for (double v : state.running_var) bn.f64(v);
    write_section(w, bn.str());

    write_section(w, memory_.serialize());
    write_section(w, growth_log_.to_jsonl());
    write_section(w, rng_.serialize());

    write_file_atomic(path, w.str());
}

Trainer Trainer::load_checkpoint(const std::string& path) {
    ByteReader r(read_file(path));
    r.expect_magic("NPMC", "checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    const auto section = [&r]() { return r.bytes(r.u64()); };

    const nlohmann::json meta = nlohmann::json::parse(section());
    Trainer t;
    from_json(meta.at("config"), t.cfg_);
    t.cfg_.validate();
    t.d_embed_ = meta.at("d_embed").get<std::size_t>();
    t.class_count_ = meta.at("class_count").get<std::size_t>();
    t.epoch_done_ = meta.at("epoch_done").get<std::uint64_t>();
    t.opt_ = AdamOptimizer(t.cfg_.adam);

    std::vector<BlockInfo> blocks;
    for (const auto& b : meta.at("blocks"))
        blocks.push_back(BlockInfo{b.at("serial").get<std::uint64_t>(),
                                   b.at("created_at_epoch").get<std::uint64_t>()});
    t.model_ = NeuroClassifier::from_structure(t.d_embed_, t.cfg_.d_prime, t.class_count_,
                                               t.cfg_.tau, t.cfg_.growth.max_blocks, blocks,
                                               meta.at("next_block_serial").get<std::uint64_t>());
    for (const auto& e : meta.at("val_history"))
        t.val_history_.push(e.at("epoch").get<std::uint64_t>(), e.at("val_loss").get<double>());

    {
        ByteReader pr(section());
        for (Parameter* p : t.model_.parameters()) {
            const std::uint64_t rows = pr.u64(), cols = pr.u64();
            if (rows != p->value.rows || cols != p->value.cols)
                throw FormatError("checkpoint: shape mismatch for " + p->id);
            for (double& v : p->value.data) v = pr.f64();
        }
        pr.expect_end("checkpoint parameters");
    }
    {
        ByteReader ar(section());
        const auto params = t.model_.parameters();
        if (ar.u64() != params.size()) throw FormatError("checkpoint: adam state count mismatch");
        for (Parameter* p : params) {
            if (ar.u8() == 0) continue;
            AdamState s;
            s.t = ar.u64();
            s.m = Tensor(p->value.rows, p->value.cols);
            s.v = Tensor(p->value.rows, p->value.cols);
            for (double& v : s.m.data) v = ar.f64();
            for (double& v : s.v.data) v = ar.f64();
            t.opt_.set_state(p->id, std::move(s));
        }
        ar.expect_end("checkpoint adam");
    }
    {
        ByteReader br(section());
        BatchNormState& state = t.model_.fusion().bn;
        if (br.u64() != state.dim()) throw FormatError("checkpoint: batchnorm dim mismatch");
        for (double& v : state.running_mean) v = br.f64();
        for (double& v : state.running_var) v = br.f64();
        br.expect_end("checkpoint batchnorm");
    }
    t.memory_ = FlatMemoryIndex::deserialize(section());
    t.growth_log_ = GrowthLog::from_jsonl(section());
    t.rng_.deserialize(section());
    r.expect_end("checkpoint");
    return t;
}

}  // namespace npmc
