#include "npmc/metrics.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"

namespace npmc {

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += at(c, c);
    return s;
}

ConfusionMatrix confusion_from_pairs(const std::vector<int>& actual,
                                     const std::vector<int>& predicted, std::size_t classes) {
    if (actual.size() != predicted.size())
        throw ContractError("confusion: " + std::to_string(actual.size()) + " actual vs " +
                            std::to_string(predicted.size()) + " predicted");
    ConfusionMatrix m(classes);
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const int a = actual[i], p = predicted[i];
        if (a < 0 || p < 0 || static_cast<std::size_t>(a) >= classes ||
            static_cast<std::size_t>(p) >= classes)
            throw ContractError("confusion: label out of range at sample " + std::to_string(i));
        ++m.at(static_cast<std::size_t>(a), static_cast<std::size_t>(p));
    }
    return m;
}

ClassificationReport report_from_confusion(const ConfusionMatrix& m) {
    const std::uint64_t total = m.total();
    if (total < 1) throw ContractError("report: empty confusion matrix");

    ClassificationReport r;
    r.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);

    for (std::size_t c = 0; c < m.classes; ++c) {
        std::uint64_t tp = m.at(c, c), col = 0, row = 0;
        for (std::size_t i = 0; i < m.classes; ++i) {
            col += m.at(i, c);  // predicted c
            row += m.at(c, i);  // actual c
        }
        ClassMetrics cm;
        cm.label = static_cast<int>(c);
        cm.support = row;
        if (col > 0) {
            cm.precision = static_cast<double>(tp) / static_cast<double>(col);
        } else {
            r.warnings.push_back("class " + std::to_string(c) + ": no predictions, precision set to 0");
        }
        if (row > 0) {
            cm.recall = static_cast<double>(tp) / static_cast<double>(row);
        } else {
            r.warnings.push_back("class " + std::to_string(c) + ": no samples, recall set to 0");
        }
        cm.f1 = (cm.precision + cm.recall) > 0.0
                    ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                    : 0.0;
        r.macro_precision += cm.precision;
        r.macro_recall += cm.recall;
        r.macro_f1 += cm.f1;
        r.per_class.push_back(cm);
    }
    const double n = static_cast<double>(m.classes);
    r.macro_precision /= n;
    r.macro_recall /= n;
    r.macro_f1 /= n;
    return r;
}

std::string report_to_json(const ClassificationReport& report) {
    nlohmann::ordered_json j;
    j["accuracy"] = report.accuracy;
    j["macro"] = {{"precision", report.macro_precision},
                  {"recall", report.macro_recall},
                  {"f1", report.macro_f1}};
    j["per_class"] = nlohmann::ordered_json::array();
    for (const ClassMetrics& c : report.per_class)
        j["per_class"].push_back({{"label", c.label},
                                  {"precision", c.precision},
                                  {"recall", c.recall},
                                  {"f1", c.f1},
                                  {"support", c.support}});
    j["warnings"] = report.warnings;
    return j.dump(2);
}

ClassificationReport report_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ClassificationReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_precision = j.at("macro").at("precision").get<double>();
    r.macro_recall = j.at("macro").at("recall").get<double>();
    r.macro_f1 = j.at("macro").at("f1").get<double>();
    for (const auto& c : j.at("per_class")) {
        ClassMetrics cm;
        cm.label = c.at("label").get<int>();
        cm.precision = c.at("precision").get<double>();
        cm.recall = c.at("recall").get<double>();
        cm.f1 = c.at("f1").get<double>();
        cm.support = c.at("support").get<std::uint64_t>();
        r.per_class.push_back(cm);
    }
    for (const auto& w : j.at("warnings")) r.warnings.push_back(w.get<std::string>());
    return r;
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cont_frac(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cont_frac(a, b, x) / a;
    return 1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b;
}

PairedTTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ContractError("paired_ttest: length mismatch " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
    const std::size_t n = a.size();
    if (n < 2) throw ContractError("paired_ttest: need n >= 2");

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    if (ss == 0.0) throw ContractError("paired_ttest: zero variance in differences");

    PairedTTestResult r;
    r.n = n;
    r.df = n - 1;
    r.mean_diff = mean;
    r.sd = std::sqrt(ss / static_cast<double>(n - 1));
    r.se = r.sd / std::sqrt(static_cast<double>(n));
    r.t = mean / r.se;
    const double df = static_cast<double>(r.df);
    r.p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + r.t * r.t));
    return r;
}

}  // namespace npmc
