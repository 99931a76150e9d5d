#pragma once

#include <cstddef>
#include <vector>

namespace rulkit {

struct MetricReport {
    double rmse = 0.0;
    double mae = 0.0;
    double score = 0.0;
    double monotonicity = 0.0;
    double trendiness = 0.0;
    double mad = 0.0;
    double mv = 0.0;
    std::size_t mv_window = 0;
};

double rmse(const std::vector<double>& pred, const std::vector<double>& actual);
double mae(const std::vector<double>& pred, const std::vector<double>& actual);

// Asymmetric exponential error aggregate: E = actual - predicted,
// A = exp(-E/13) for early predictions (E <= 0), exp(E/10) for late ones;
// returns mean A. Equal curves give exactly 1.
double score(const std::vector<double>& pred, const std::vector<double>& actual);

// |#rises - #falls| / (N-1); zero steps count in neither term.
double monotonicity(const std::vector<double>& series);

// Signed Pearson correlation of the values against their indices.
double trendiness(const std::vector<double>& series);

// Mean absolute step between adjacent points.
double mad(const std::vector<double>& series);

// Mean of population variances over length-k windows with stride 1.
double mv(const std::vector<double>& series, std::size_t window);

// rmse/mae/score compare pred to label; the fluctuation and trend metrics
// (monotonicity, trendiness, mad, mv) describe the prediction curve itself.
MetricReport evaluate(const std::vector<double>& pred, const std::vector<double>& label,
                      std::size_t mv_window = 21);

}  // namespace rulkit
