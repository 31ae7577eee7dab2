#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npmc/errors.hpp"

namespace npmc {

// Rows = actual class, columns = predicted class. Integer counts so
// accuracy stays exact until the final division.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;  // classes * classes, row-major

    explicit ConfusionMatrix(std::size_t c = 0) : classes(c), counts(c * c, 0) {}

    std::uint64_t& at(std::size_t actual, std::size_t predicted) {
        return counts[actual * classes + predicted];
    }
    std::uint64_t at(std::size_t actual, std::size_t predicted) const {
        return counts[actual * classes + predicted];
    }
    std::uint64_t total() const;
    std::uint64_t trace() const;
};

ConfusionMatrix confusion_from_pairs(const std::vector<int>& actual,
                                     const std::vector<int>& predicted, std::size_t classes);

struct ClassMetrics {
    int label = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
    std::vector<std::string> warnings;  // zero-denominator classes
};

ClassificationReport report_from_confusion(const ConfusionMatrix& m);

std::string report_to_json(const ClassificationReport& report);
ClassificationReport report_from_json(const std::string& text);

struct PairedTTestResult {
    std::size_t n = 0;
    double mean_diff = 0.0;
    double sd = 0.0;  // sample standard deviation (n-1 divisor)
    double se = 0.0;
    double t = 0.0;
    std::size_t df = 0;
    double p = 0.0;  // two-sided
};

PairedTTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b), exposed for tests.
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace npmc
