#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "npmc/binio.hpp"
#include "npmc/data_io.hpp"
#include "npmc/metrics.hpp"
#include "npmc/training.hpp"

namespace {

using namespace npmc;

EmbeddingDataset read_dataset(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return read_csv(path);
    return read_binary(path);
}

std::string fmt(double v, int precision = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

struct TrainFlags {
    std::string data, config_path, out_model, log_path, growth_log_path, resume;
    std::optional<std::uint64_t> seed, epochs;
    bool no_memory = false, no_growth = false;
};

int cmd_train(const TrainFlags& flags) {
    TrainConfig cfg;
    SplitSpec split;
    if (!flags.config_path.empty()) {
        const nlohmann::json j = nlohmann::json::parse(read_file(flags.config_path));
        from_json(j, cfg);
        if (j.contains("split")) {
            const auto& s = j.at("split");
            split.train_fraction = s.value("train", split.train_fraction);
            split.val_fraction = s.value("val", split.val_fraction);
            split.test_fraction = s.value("test", split.test_fraction);
        }
    }
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.epochs) cfg.epochs = *flags.epochs;
    if (flags.no_memory) cfg.use_memory = false;
    if (flags.no_growth) cfg.growth.enabled = false;
    split.seed = cfg.seed;
    cfg.validate();

    const EmbeddingDataset dataset = read_dataset(flags.data);
    const Splits splits = split_dataset(dataset, split);

    std::optional<Trainer> trainer;
    if (!flags.resume.empty()) {
        trainer.emplace(Trainer::load_checkpoint(flags.resume));
        if (flags.epochs) trainer->set_epochs(*flags.epochs);
    } else {
        trainer.emplace(cfg, dataset.d, static_cast<std::size_t>(dataset.class_count));
    }

    const std::vector<LogRow> rows = trainer->fit(splits.train, splits.val);

    std::ostringstream log;
    log << LogRow::csv_header() << "\n";
    for (const LogRow& row : rows) log << row.to_csv_row() << "\n";
    write_file_atomic(flags.log_path, log.str());

    const std::string growth_path =
        flags.growth_log_path.empty() ? flags.log_path + ".growth.jsonl" : flags.growth_log_path;
    write_file_atomic(growth_path, trainer->growth_log().to_jsonl());

    trainer->save_checkpoint(flags.out_model);

    const EvalResult test = trainer->evaluate(splits.test);
    std::cout << "test_accuracy=" << fmt(test.accuracy) << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& report_path) {
    const Trainer trainer = Trainer::load_checkpoint(model_path);
    const EmbeddingDataset ds = read_dataset(data_path);
    if (ds.d != trainer.model().d_embed())
        throw ContractError("eval: dataset dim " + std::to_string(ds.d) + " vs model dim " +
                            std::to_string(trainer.model().d_embed()));

    const EvalResult result = trainer.evaluate(ds);
    const ConfusionMatrix m =
        confusion_from_pairs(ds.labels, result.predictions, trainer.model().class_count());
    const ClassificationReport report = report_from_confusion(m);
    if (!report_path.empty()) write_file_atomic(report_path, report_to_json(report));
    std::cout << "accuracy=" << fmt(result.accuracy) << "\n";
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input_csv,
                const std::string& out_csv) {
    const Trainer trainer = Trainer::load_checkpoint(model_path);
    const EmbeddingDataset ds = read_csv(input_csv);
    if (ds.d != trainer.model().d_embed())
        throw ContractError("predict: input dim " + std::to_string(ds.d) + " vs model dim " +
                            std::to_string(trainer.model().d_embed()));

    // Label column of the input is ignored; only features are used.
    const std::size_t C = trainer.model().class_count();
    std::ostringstream out;
    out << "row,pred";
    for (std::size_t c = 0; c < C; ++c) out << ",p" << c;
    out << "\n";

    EvalResult eval;  // reuse batching via evaluate on a label-stripped copy
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < ds.n; start += chunk) {
        const std::size_t end = std::min(ds.n, start + chunk);
        Tensor embed(end - start, ds.d), retrieved(end - start, ds.d);
        for (std::size_t i = start; i < end; ++i) {
            const std::vector<double> q = ds.row_vec(i);
            std::copy(q.begin(), q.end(), &embed.data[(i - start) * ds.d]);
            if (trainer.config().use_memory && trainer.memory().size() > 0) {
                const auto hits = trainer.memory().search_knn(q, trainer.config().knn_k, false);
                const std::vector<double> mean = trainer.memory().aggregate_mean(hits);
                std::copy(mean.begin(), mean.end(), &retrieved.data[(i - start) * ds.d]);
            }
        }
        const Tensor fused = trainer.model().fuse(embed, retrieved);
        const ForwardResult fr = trainer.model().forward(fused, GateMode::HardInfer);
        const std::vector<int> pred = NeuroClassifier::argmax_rows(fr.logits);
        for (std::size_t i = 0; i < fr.probs.rows; ++i) {
            out << (start + i) << ',' << pred[i];
            for (std::size_t c = 0; c < C; ++c) out << ',' << fmt(fr.probs(i, c));
            out << "\n";
        }
    }
    write_file_atomic(out_csv, out.str());
    return 0;
}

std::vector<double> read_column(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            values.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw FormatError("stats: non-numeric line " + std::to_string(line_no) + " in " + path);
        }
    }
    return values;
}

int cmd_stats_ttest(const std::string& a_path, const std::string& b_path) {
    const std::vector<double> a = read_column(a_path);
    const std::vector<double> b = read_column(b_path);
    const PairedTTestResult r = paired_ttest(a, b);
    std::printf("n=%zu\n", r.n);
    std::printf("mean_diff=%.6f\n", r.mean_diff);
    std::printf("sd=%.6f\n", r.sd);
    std::printf("se=%.6f\n", r.se);
    std::printf("t=%.6f\n", r.t);
    std::printf("df=%zu\n", r.df);
    std::printf("p=%.6g\n", r.p);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neuroplastic modular classifier over embedding vectors"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic cluster dataset");
    SyntheticSpec spec;
    std::string synth_out, synth_format = "bin";
    synth->add_option("--classes", spec.classes);
    synth->add_option("--dim", spec.dim);
    synth->add_option("--per-class", spec.per_class);
    synth->add_option("--radius", spec.cluster_radius);
    synth->add_option("--noise", spec.noise_std);
    synth->add_option("--seed", spec.seed);
    synth->add_option("--out", synth_out)->required();
    synth->add_option("--format", synth_format)->check(CLI::IsMember({"bin", "csv"}));

    // train
    auto* train = app.add_subcommand("train", "Split, train, and checkpoint a model");
    TrainFlags tf;
    std::uint64_t seed_flag = 0, epochs_flag = 0;
    train->add_option("--data", tf.data)->required();
    train->add_option("--config", tf.config_path);
    train->add_option("--out-model", tf.out_model)->required();
    train->add_option("--log", tf.log_path)->required();
    train->add_option("--growth-log", tf.growth_log_path);
    auto* seed_opt = train->add_option("--seed", seed_flag);
    auto* epochs_opt = train->add_option("--epochs", epochs_flag);
    train->add_option("--resume", tf.resume);
    train->add_flag("--no-memory", tf.no_memory);
    train->add_flag("--no-growth", tf.no_growth);

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write a metrics report");
    std::string eval_model, eval_data, eval_report;
    eval->add_option("--model", eval_model)->required();
    eval->add_option("--data", eval_data)->required();
    eval->add_option("--report", eval_report);

    // predict
    auto* predict = app.add_subcommand("predict", "Predict classes for feature rows");
    std::string pred_model, pred_in, pred_out;
    predict->add_option("--model", pred_model)->required();
    predict->add_option("--input-csv", pred_in)->required();
    predict->add_option("--out-csv", pred_out)->required();

    // stats-ttest
    auto* stats = app.add_subcommand("stats-ttest", "Paired t-test over two accuracy columns");
    std::string stats_a, stats_b;
    stats->add_option("--a", stats_a)->required();
    stats->add_option("--b", stats_b)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            const EmbeddingDataset ds = gen_synthetic(spec);
            if (synth_format == "csv")
                write_csv(ds, synth_out);
            else
                write_binary(ds, synth_out);
            std::cout << "n=" << ds.n << " d=" << ds.d << " classes=" << ds.class_count << "\n";
            return 0;
        }
        if (*train) {
            if (*seed_opt) tf.seed = seed_flag;
            if (*epochs_opt) tf.epochs = epochs_flag;
            return cmd_train(tf);
        }
        if (*eval) return cmd_eval(eval_model, eval_data, eval_report);
        if (*predict) return cmd_predict(pred_model, pred_in, pred_out);
        if (*stats) return cmd_stats_ttest(stats_a, stats_b);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
