#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "ndpnn/errors.hpp"

namespace ndpnn {

/// Rows = actual class, columns = predicted class.
using Confusion = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    // Macro averages skip classes with zero support; weighted averages use
    // support as weight. Both are reported since either aggregation is
    // common.
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
    std::int64_t total = 0;
};

inline MetricsReport evaluate_metrics(const Confusion& c) {
    if (c.rows() != c.cols() || c.rows() < 1)
        throw std::invalid_argument("evaluate_metrics: confusion matrix must be square");
    std::int64_t total = 0, diag = 0;
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
            if (c(i, j) < 0) throw std::invalid_argument("evaluate_metrics: negative count");
            total += c(i, j);
            if (i == j) diag += c(i, j);
        }
    if (total == 0) throw std::invalid_argument("evaluate_metrics: all-zero confusion matrix");

    MetricsReport rep;
    rep.total = total;
    rep.accuracy = static_cast<double>(diag) / static_cast<double>(total);
    const Eigen::Index n = c.rows();
    std::int64_t supported = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        ClassMetrics m;
        const std::int64_t row = c.row(k).sum();
        const std::int64_t col = c.col(k).sum();
        m.support = row;
        m.precision = col > 0 ? static_cast<double>(c(k, k)) / col : 0.0;
        m.recall = row > 0 ? static_cast<double>(c(k, k)) / row : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        if (row > 0) {
            ++supported;
            rep.macro_precision += m.precision;
            rep.macro_recall += m.recall;
            rep.macro_f1 += m.f1;
            rep.weighted_precision += m.precision * row;
            rep.weighted_recall += m.recall * row;
            rep.weighted_f1 += m.f1 * row;
        }
        rep.per_class.push_back(m);
    }
    if (supported > 0) {
        rep.macro_precision /= supported;
        rep.macro_recall /= supported;
        rep.macro_f1 /= supported;
        rep.weighted_precision /= total;
        rep.weighted_recall /= total;
        rep.weighted_f1 /= total;
    }
    return rep;
}

} // namespace ndpnn
