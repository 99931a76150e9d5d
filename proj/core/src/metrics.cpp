#include "rulkit/metrics.hpp"

#include <cmath>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

void check_pair(const std::vector<double>& pred, const std::vector<double>& actual,
                const char* op) {
    if (pred.size() != actual.size()) throw LengthError(std::string(op) + ": length mismatch");
    if (pred.empty()) throw LengthError(std::string(op) + ": empty series");
}

}  // namespace

double rmse(const std::vector<double>& pred, const std::vector<double>& actual) {
    check_pair(pred, actual, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - actual[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(const std::vector<double>& pred, const std::vector<double>& actual) {
    check_pair(pred, actual, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - actual[i]);
    return s / static_cast<double>(pred.size());
}

double score(const std::vector<double>& pred, const std::vector<double>& actual) {
    check_pair(pred, actual, "score");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = actual[i] - pred[i];
        s += e <= 0.0 ? std::exp(-e / 13.0) : std::exp(e / 10.0);
    }
    return s / static_cast<double>(pred.size());
}

double monotonicity(const std::vector<double>& series) {
    if (series.size() < 2) throw LengthError("monotonicity: need at least 2 points");
    long long up = 0, down = 0;
    for (std::size_t i = 1; i < series.size(); ++i) {
        const double d = series[i] - series[i - 1];
        if (d > 0.0)
            ++up;
        else if (d < 0.0)
            ++down;
    }
    return static_cast<double>(std::llabs(up - down)) / static_cast<double>(series.size() - 1);
}

double trendiness(const std::vector<double>& series) {
    const std::size_t n = series.size();
    if (n < 2) throw LengthError("trendiness: need at least 2 points");
    double mean_v = 0.0;
    for (double v : series) mean_v += v;
    mean_v /= static_cast<double>(n);
    const double mean_t = static_cast<double>(n - 1) / 2.0;

    double cov = 0.0, var_v = 0.0, var_t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dv = series[i] - mean_v;
        const double dt = static_cast<double>(i) - mean_t;
        cov += dv * dt;
        var_v += dv * dv;
        var_t += dt * dt;
    }
    if (var_v == 0.0) throw DegenerateDataError("trendiness: constant series");
    return cov / std::sqrt(var_v * var_t);
}

double mad(const std::vector<double>& series) {
    if (series.size() < 2) throw LengthError("mad: need at least 2 points");
    double s = 0.0;
    for (std::size_t i = 1; i < series.size(); ++i) s += std::fabs(series[i] - series[i - 1]);
    return s / static_cast<double>(series.size() - 1);
}

double mv(const std::vector<double>& series, std::size_t window) {
    const std::size_t n = series.size();
    if (window < 2) throw LengthError("mv: window must be >= 2");
    if (window > n) throw LengthError("mv: window longer than series");

    double total = 0.0;
    for (std::size_t start = 0; start + window <= n; ++start) {
        double mean = 0.0;
        for (std::size_t j = 0; j < window; ++j) mean += series[start + j];
        mean /= static_cast<double>(window);
        double var = 0.0;
        for (std::size_t j = 0; j < window; ++j) {
            const double d = series[start + j] - mean;
            var += d * d;
        }
        total += var / static_cast<double>(window);
    }
    return total / static_cast<double>(n - window + 1);
}

MetricReport evaluate(const std::vector<double>& pred, const std::vector<double>& label,
                      std::size_t mv_window) {
    check_pair(pred, label, "evaluate");
    MetricReport report;
    report.rmse = rmse(pred, label);
    report.mae = mae(pred, label);
    report.score = score(pred, label);
    report.monotonicity = monotonicity(pred);
    report.trendiness = trendiness(pred);
    report.mad = mad(pred);
    report.mv = mv(pred, mv_window);
    report.mv_window = mv_window;
    return report;
}

}  // namespace rulkit
