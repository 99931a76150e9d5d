#include "rulkit/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

std::vector<double> scaling_filter(Wavelet wavelet) {
    switch (wavelet) {
        case Wavelet::haar:
            return {std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0};
        case Wavelet::db4:
            return {0.23037781330885523, 0.7148465705525415, 0.6308807679295904,
                    -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
                    0.032883011666982945, -0.010597401784997278};
    }
    throw ConfigError("unknown wavelet");
}

// One periodized analysis step: s[L] -> (lowpass[L/2], highpass[L/2]).
void wpd_split(const std::vector<double>& s, const std::vector<double>& h,
               const std::vector<double>& g, std::vector<double>& low,
               std::vector<double>& high) {
    const std::size_t len = s.size();
    const std::size_t half = len / 2;
    low.assign(half, 0.0);
    high.assign(half, 0.0);
    for (std::size_t n = 0; n < half; ++n) {
        double a = 0.0, d = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            const double x = s[(2 * n + k) % len];
            a += h[k] * x;
            d += g[k] * x;
        }
        low[n] = a;
        high[n] = d;
    }
}

}  // namespace

std::array<double, 9> time_features(const std::vector<double>& signal) {
    const std::size_t n = signal.size();
    if (n < 2) throw LengthError("time_features: need at least 2 samples");

    double sum = 0.0, max_v = signal[0], min_v = signal[0];
    for (double x : signal) {
        sum += x;
        max_v = std::max(max_v, x);
        min_v = std::min(min_v, x);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const double mean = sum * inv_n;

    double sq = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0, abs_mean = 0.0, sqrt_abs_mean = 0.0;
    for (double x : signal) {
        sq += x * x;
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        abs_mean += std::fabs(x);
        sqrt_abs_mean += std::sqrt(std::fabs(x));
    }
    const double rms = std::sqrt(sq * inv_n);
    if (rms == 0.0) throw DegenerateDataError("time_features: all-zero signal");
    const double variance = m2 * inv_n;
    if (variance == 0.0)
        throw DegenerateDataError("time_features: constant signal has undefined moments");
    m3 *= inv_n;
    m4 *= inv_n;
    abs_mean *= inv_n;
    sqrt_abs_mean *= inv_n;

    const double stddev = std::sqrt(variance);
    const double peak = std::max(std::fabs(max_v), std::fabs(min_v));
    return {rms,
            variance,
            peak,
            max_v - min_v,
            m3 / (stddev * stddev * stddev),
            m4 / (variance * variance),
            peak / rms,
            peak / (sqrt_abs_mean * sqrt_abs_mean),
            rms / abs_mean};
}

std::array<double, 2> freq_features(const std::vector<double>& signal, double sample_rate) {
    const std::size_t n = signal.size();
    if (!is_power_of_two(n)) throw ShapeError("freq_features: length must be a power of two");
    if (sample_rate <= 0.0) throw DomainError("freq_features: sample_rate must be positive");

    std::vector<std::complex<double>> spec(n);
    for (std::size_t i = 0; i < n; ++i) spec[i] = signal[i];
    fft(spec);

    // One-sided power spectrum, DC included, bins 0..n/2.
    double total = 0.0, first = 0.0, second = 0.0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
        const double p = std::norm(spec[k]);
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n);
        total += p;
        first += f * p;
        second += f * f * p;
    }
    if (total == 0.0) throw DegenerateDataError("freq_features: zero total power");
    return {first / total, std::sqrt(second / total)};
}

std::array<double, 8> wavelet_packet_energies(const std::vector<double>& signal,
                                              Wavelet wavelet) {
    if (signal.size() < 8 || signal.size() % 8 != 0)
        throw ShapeError("wavelet_packet_energies: length must be a positive multiple of 8");

    const std::vector<double> h = scaling_filter(wavelet);
    std::vector<double> g(h.size());
    for (std::size_t k = 0; k < h.size(); ++k)
        g[k] = (k % 2 == 0 ? 1.0 : -1.0) * h[h.size() - 1 - k];

    // Three full analysis levels; nodes kept in natural (filter-path) order.
    std::vector<std::vector<double>> nodes = {signal};
    for (int level = 0; level < 3; ++level) {
        std::vector<std::vector<double>> next;
        next.reserve(nodes.size() * 2);
        for (const auto& s : nodes) {
            std::vector<double> low, high;
            wpd_split(s, h, g, low, high);
            next.push_back(std::move(low));
            next.push_back(std::move(high));
        }
        nodes = std::move(next);
    }

    // Natural order -> ascending frequency via the Gray-code permutation.
    std::array<double, 8> energies{};
    for (std::size_t p = 0; p < 8; ++p) {
        const std::size_t natural = p ^ (p >> 1);
        double e = 0.0;
        for (double c : nodes[natural]) e += c * c;
        energies[p] = e;
    }
    return energies;
}

FeatureVector38 feature_vector(const VibrationRecord& record, const FeatureConfig& cfg) {
    if (record.horizontal.size() < cfg.crop_len || record.vertical.size() < cfg.crop_len)
        throw ShapeError("feature_vector: record shorter than crop length");

    FeatureVector38 out{};
    std::size_t pos = 0;
    for (const auto* channel : {&record.horizontal, &record.vertical}) {
        std::vector<double> sig(channel->begin(),
                                channel->begin() + static_cast<std::ptrdiff_t>(cfg.crop_len));
        const auto t = time_features(sig);
        const auto f = freq_features(sig, cfg.sample_rate);
        const auto w = wavelet_packet_energies(sig, cfg.wavelet);
        for (double v : t) out[pos++] = v;
        for (double v : f) out[pos++] = v;
        for (double v : w) out[pos++] = v;
    }
    return out;
}

std::vector<double> savitzky_golay(const std::vector<double>& series, const SmootherConfig& cfg) {
    if (cfg.window < 3 || cfg.window % 2 == 0)
        throw ConfigError("savitzky_golay: window must be odd and >= 3");
    if (cfg.polynomial_order >= cfg.window)
        throw ConfigError("savitzky_golay: order must be < window");
    const std::size_t n = series.size();
    const std::size_t w = cfg.window;
    if (n < w) throw LengthError("savitzky_golay: series shorter than window");

    const std::size_t half = w / 2;
    const std::size_t terms = cfg.polynomial_order + 1;

    // Projection matrix of the windowed least-squares fit: row r gives the
    // weights that evaluate the fitted polynomial at window offset r.
    Eigen::MatrixXd vand(w, terms);
    for (std::size_t r = 0; r < w; ++r) {
        const double x = static_cast<double>(r) - static_cast<double>(half);
        double p = 1.0;
        for (std::size_t c = 0; c < terms; ++c) {
            vand(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = p;
            p *= x;
        }
    }
    const Eigen::MatrixXd proj =
        vand * (vand.transpose() * vand).ldlt().solve(vand.transpose());

    std::vector<double> out(n);
    auto window_dot = [&](std::size_t eval_row, std::size_t start) {
        double acc = 0.0;
        for (std::size_t j = 0; j < w; ++j)
            acc += proj(static_cast<Eigen::Index>(eval_row), static_cast<Eigen::Index>(j)) *
                   series[start + j];
        return acc;
    };

    for (std::size_t i = half; i + half < n; ++i) out[i] = window_dot(half, i - half);

    if (cfg.boundary == SgBoundary::polyfit) {
        for (std::size_t i = 0; i < half; ++i) {
            out[i] = window_dot(i, 0);
            out[n - 1 - i] = window_dot(w - 1 - i, n - w);
        }
    } else {
        // Mirror the series around its endpoints and run the centered stencil.
        auto mirrored = [&](std::ptrdiff_t idx) {
            if (idx < 0) idx = -idx;
            const auto last = static_cast<std::ptrdiff_t>(n) - 1;
            if (idx > last) idx = 2 * last - idx;
            return series[static_cast<std::size_t>(idx)];
        };
        for (std::size_t i = 0; i < half; ++i) {
            for (std::size_t side = 0; side < 2; ++side) {
                const std::ptrdiff_t center =
                    side == 0 ? static_cast<std::ptrdiff_t>(i)
                              : static_cast<std::ptrdiff_t>(n - 1 - i);
                double acc = 0.0;
                for (std::size_t j = 0; j < w; ++j)
                    acc += proj(static_cast<Eigen::Index>(half), static_cast<Eigen::Index>(j)) *
                           mirrored(center + static_cast<std::ptrdiff_t>(j) -
                                    static_cast<std::ptrdiff_t>(half));
                out[static_cast<std::size_t>(center)] = acc;
            }
        }
    }
    return out;
}

void write_feature_csv(const std::filesystem::path& path,
                       const std::vector<FeatureVector38>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open feature CSV for writing: " + path.string());
    out.precision(17);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    }
    if (!out) throw IoError("feature CSV write failed: " + path.string());
}

std::vector<FeatureVector38> read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature CSV: " + path.string());
    std::vector<FeatureVector38> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        FeatureVector38 row{};
        std::stringstream ss(line);
        std::string field;
        std::size_t i = 0;
        while (std::getline(ss, field, ',')) {
            if (i >= kFeatureDim) throw ParseError("feature CSV row too wide: " + path.string());
            row[i++] = std::stod(field);
        }
        if (i != kFeatureDim) throw ParseError("feature CSV row too narrow: " + path.string());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rulkit
