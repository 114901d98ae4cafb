#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "neuroink/common.hpp"

namespace neuroink {

// Binary confusion counts relative to a declared positive class.
struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }

    static ConfusionMatrix from_labels(const std::vector<int>& y_true,
                                       const std::vector<int>& y_pred, int positive) {
        if (y_true.size() != y_pred.size())
            throw Error::data("LengthMismatch", "label vectors differ in length");
        ConfusionMatrix c;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            const bool t = y_true[i] == positive, p = y_pred[i] == positive;
            if (t && p) ++c.tp;
            else if (!t && p) ++c.fp;
            else if (t && !p) ++c.fn;
            else ++c.tn;
        }
        return c;
    }

    // F1 of the positive class; 0 when the precision+recall denominator is 0.
    double f1() const {
        const double denom = 2.0 * tp + fp + fn;
        return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
    }

    double recall() const {
        return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    }
};

namespace detail {
inline void check_binary_labels(const std::vector<int>& y_true,
                                const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size())
        throw Error::data("LengthMismatch", "label vectors differ in length");
    if (y_true.empty()) throw Error::data("EmptyInput", "no samples");
    for (auto v : y_true)
        if (v != 0 && v != 1) throw Error::data("UnknownLabel", "labels must be 0/1");
    for (auto v : y_pred)
        if (v != 0 && v != 1) throw Error::data("UnknownLabel", "labels must be 0/1");
}
}  // namespace detail

// Unweighted mean of the two per-class F1 scores.
inline double macro_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    detail::check_binary_labels(y_true, y_pred);
    const auto pos = ConfusionMatrix::from_labels(y_true, y_pred, 1);
    const auto neg = ConfusionMatrix::from_labels(y_true, y_pred, 0);
    return (pos.f1() + neg.f1()) / 2.0;
}

// Macro-averaged per-class recall (balanced accuracy).
inline double unweighted_accuracy(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred) {
    detail::check_binary_labels(y_true, y_pred);
    const auto pos = ConfusionMatrix::from_labels(y_true, y_pred, 1);
    const auto neg = ConfusionMatrix::from_labels(y_true, y_pred, 0);
    return (pos.recall() + neg.recall()) / 2.0;
}

inline double plain_accuracy(const std::vector<int>& y_true,
                             const std::vector<int>& y_pred) {
    detail::check_binary_labels(y_true, y_pred);
    if (y_true.empty()) throw Error::data("EmptyInput", "no samples");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) ok += y_true[i] == y_pred[i];
    return static_cast<double>(ok) / y_true.size();
}

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single fold
};

// Arithmetic mean of fold-level values (not pooled predictions).
inline MetricSummary aggregate_folds(const std::vector<double>& per_fold) {
    if (per_fold.empty()) throw Error::data("EmptyInput", "no fold results");
    MetricSummary s;
    for (double v : per_fold) s.mean += v;
    s.mean /= static_cast<double>(per_fold.size());
    if (per_fold.size() > 1) {
        double acc = 0.0;
        for (double v : per_fold) acc += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(per_fold.size() - 1));
    }
    return s;
}

// Tables report 100x values rounded to one decimal.
inline double to_percent(double v) { return std::round(v * 1000.0) / 10.0; }

}  // namespace neuroink
