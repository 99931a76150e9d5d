#include "rulkit/labels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rulkit/errors.hpp"
#include "rulkit/metrics.hpp"

namespace rulkit {

namespace {

const char* kMethodNames[] = {"linear", "piecewise", "rms", "pca",
                              "ae",     "vqvae",     "f_ae", "f_vqvae"};

std::vector<double> horizontal_rms(const std::vector<VibrationRecord>& run) {
    std::vector<double> out;
    out.reserve(run.size());
    for (const auto& rec : run) {
        double sq = 0.0;
        for (double v : rec.horizontal) sq += v * v;
        out.push_back(std::sqrt(sq / static_cast<double>(rec.horizontal.size())));
    }
    return out;
}

// Fallback knee when the 3-sigma rule never fires: 40% of the lifetime.
std::size_t fallback_fpt(std::size_t n) {
    return static_cast<std::size_t>(0.4 * static_cast<double>(n - 1));
}

}  // namespace

std::string method_name(Method method) { return kMethodNames[static_cast<int>(method)]; }

Method method_from_string(const std::string& name) {
    for (int i = 0; i < 8; ++i)
        if (name == kMethodNames[i]) return static_cast<Method>(i);
    throw ConfigError("unknown label method: " + name);
}

bool method_needs_models(Method method) {
    switch (method) {
        case Method::linear:
        case Method::piecewise:
        case Method::rms:
            return false;
        default:
            return true;
    }
}

HiCurve linear_labels(std::size_t n) {
    if (n < 2) throw LengthError("linear_labels: need at least 2 records");
    HiCurve curve;
    curve.method = Method::linear;
    curve.postprocessed = true;  // already in [0,1] by construction
    curve.values.resize(n);
    const double t_n = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        curve.values[i] = 1.0 - static_cast<double>(i) / t_n;
    return curve;
}

HiCurve piecewise_labels(std::size_t n, std::size_t fpt_index) {
    if (n < 2) throw LengthError("piecewise_labels: need at least 2 records");
    if (fpt_index >= n - 1) throw DomainError("piecewise_labels: FPT must precede the last record");
    HiCurve curve;
    curve.method = Method::piecewise;
    curve.postprocessed = true;
    curve.values.resize(n);
    const double t_j = static_cast<double>(fpt_index);
    const double t_n = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i);
        curve.values[i] = t <= t_j ? 1.0 : (t_n - t) / (t_n - t_j);
    }
    return curve;
}

FptResult fpt_3sigma(const std::vector<double>& series, const FptRule& rule) {
    const std::size_t n = series.size();
    std::size_t baseline = std::min<std::size_t>(
        rule.max_baseline,
        static_cast<std::size_t>(rule.baseline_fraction * static_cast<double>(n)));
    baseline = std::max<std::size_t>(baseline, 2);
    if (n <= baseline) throw LengthError("fpt_3sigma: series not longer than its baseline");

    double mean = 0.0;
    for (std::size_t i = 0; i < baseline; ++i) mean += series[i];
    mean /= static_cast<double>(baseline);
    double var = 0.0;
    for (std::size_t i = 0; i < baseline; ++i) {
        const double d = series[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(baseline);
    if (var == 0.0) throw DegenerateDataError("fpt_3sigma: constant baseline");

    FptResult result;
    result.baseline_mean = mean;
    result.baseline_std = std::sqrt(var);
    result.baseline_len = baseline;
    result.rule = rule;

    const double threshold = mean + rule.sigma * result.baseline_std;
    for (std::size_t i = baseline; i + rule.consecutive <= n; ++i) {
        bool hit = true;
        for (std::size_t k = 0; k < rule.consecutive; ++k)
            if (series[i + k] <= threshold) {
                hit = false;
                break;
            }
        if (hit) {
            result.index = i;
            break;
        }
    }
    return result;
}

HiCurve rms_hi(const std::vector<VibrationRecord>& run) {
    if (run.empty()) throw NoDataError("rms_hi: empty run");
    HiCurve curve;
    curve.method = Method::rms;
    curve.values = horizontal_rms(run);
    return curve;
}

HiCurve distance_hi(const std::vector<std::vector<double>>& latents, const SomGrid& grid) {
    HiCurve curve;
    curve.method = Method::ae;
    curve.values.reserve(latents.size());
    for (const auto& latent : latents) curve.values.push_back(som_bmu_distance(latent, grid));
    return curve;
}

HiCurve distance_hi(const std::vector<std::vector<double>>& latents, const Codebook& codebook) {
    const std::size_t dim = codebook.dim();
    HiCurve curve;
    curve.method = Method::vqvae;
    curve.values.reserve(latents.size());
    for (const auto& latent : latents) {
        if (latent.empty() || latent.size() % dim != 0)
            throw ShapeError("distance_hi: latent length not a multiple of the code dimension");
        const std::size_t positions = latent.size() / dim;
        std::vector<std::vector<double>> rows(positions);
        for (std::size_t p = 0; p < positions; ++p)
            rows[p].assign(latent.begin() + static_cast<std::ptrdiff_t>(p * dim),
                           latent.begin() + static_cast<std::ptrdiff_t>((p + 1) * dim));
        const VqAssignment assign = vq_quantize(rows, codebook);
        double sq = 0.0;
        for (std::size_t p = 0; p < positions; ++p)
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = rows[p][d] - assign.z_q[p][d];
                sq += diff * diff;
            }
        curve.values.push_back(std::sqrt(sq));
    }
    return curve;
}

HiCurve postprocess_hi(const HiCurve& raw, const SmootherConfig& smoother) {
    HiCurve curve;
    curve.method = raw.method;
    curve.values = savitzky_golay(raw.values, smoother);

    double corr;
    try {
        corr = trendiness(curve.values);
    } catch (const DegenerateDataError&) {
        throw DegenerateDataError("postprocess_hi: curve constant after smoothing");
    }
    if (corr > 0.0)
        for (double& v : curve.values) v = -v;

    const auto [lo_it, hi_it] = std::minmax_element(curve.values.begin(), curve.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) throw DegenerateDataError("postprocess_hi: curve constant after smoothing");
    for (double& v : curve.values) v = (v - lo) / (hi - lo);
    curve.postprocessed = true;
    return curve;
}

std::vector<std::vector<double>> raw_windows(const std::vector<VibrationRecord>& run,
                                             const NormStats& stats, std::size_t crop_len) {
    std::vector<std::vector<double>> out;
    out.reserve(run.size());
    for (const auto& rec : run) {
        if (rec.horizontal.size() < crop_len)
            throw ShapeError("raw_windows: record shorter than crop length");
        std::vector<double> w(crop_len);
        for (std::size_t i = 0; i < crop_len; ++i)
            w[i] = (rec.horizontal[i] - stats.horizontal.mean) / stats.horizontal.stddev;
        out.push_back(std::move(w));
    }
    return out;
}

void fit_feature_scaler(const std::vector<FeatureVector38>& rows, std::vector<double>& mean,
                        std::vector<double>& stddev) {
    if (rows.empty()) throw NoDataError("fit_feature_scaler: no rows");
    mean.assign(kFeatureDim, 0.0);
    stddev.assign(kFeatureDim, 0.0);
    for (const auto& row : rows)
        for (std::size_t j = 0; j < kFeatureDim; ++j) mean[j] += row[j];
    for (double& m : mean) m /= static_cast<double>(rows.size());
    for (const auto& row : rows)
        for (std::size_t j = 0; j < kFeatureDim; ++j) {
            const double d = row[j] - mean[j];
            stddev[j] += d * d;
        }
    for (double& s : stddev) {
        s = std::sqrt(s / static_cast<double>(rows.size()));
        if (s == 0.0) s = 1.0;  // constant feature: pass through centered
    }
}

std::vector<std::vector<double>> feature_windows(const std::vector<VibrationRecord>& run,
                                                 const FeatureConfig& cfg,
                                                 const std::vector<double>& mean,
                                                 const std::vector<double>& stddev) {
    if (mean.size() != kFeatureDim || stddev.size() != kFeatureDim)
        throw ShapeError("feature_windows: scaler size mismatch");
    std::vector<std::vector<double>> out;
    out.reserve(run.size());
    for (const auto& rec : run) {
        const FeatureVector38 f = feature_vector(rec, cfg);
        std::vector<double> w(kFeatureDim);
        for (std::size_t j = 0; j < kFeatureDim; ++j) w[j] = (f[j] - mean[j]) / stddev[j];
        out.push_back(std::move(w));
    }
    return out;
}

HiCurve build_labels(Method method, const std::vector<VibrationRecord>& run,
                     const LabelModels& models, const SmootherConfig& smoother,
                     const FeatureConfig& features, const FptRule& fpt_rule) {
    if (run.empty()) throw NoDataError("build_labels: empty run");
    const std::size_t n = run.size();

    switch (method) {
        case Method::linear:
            return linear_labels(n);
        case Method::piecewise: {
            const FptResult fpt = fpt_3sigma(horizontal_rms(run), fpt_rule);
            std::size_t knee = fpt.index.value_or(fallback_fpt(n));
            if (knee >= n - 1) knee = n - 2;
            HiCurve curve = piecewise_labels(n, knee);
            return curve;
        }
        case Method::rms:
            return postprocess_hi(rms_hi(run), smoother);
        case Method::pca: {
            if (!models.pca) throw ConfigError("build_labels: pca model missing");
            const auto windows =
                feature_windows(run, features, models.feature_mean, models.feature_std);
            HiCurve curve;
            curve.method = Method::pca;
            curve.values = pca_project_first(windows, *models.pca);
            return postprocess_hi(curve, smoother);
        }
        case Method::ae: {
            if (!models.ae_raw || !models.som_raw)
                throw ConfigError("build_labels: ae model or SOM missing");
            const auto windows = raw_windows(run, models.raw_stats);
            std::vector<std::vector<double>> latents;
            latents.reserve(windows.size());
            for (const auto& w : windows) latents.push_back(models.ae_raw->encode_latent(w));
            HiCurve curve = distance_hi(latents, *models.som_raw);
            curve.method = Method::ae;
            return postprocess_hi(curve, smoother);
        }
        case Method::vqvae: {
            if (!models.vq_raw) throw ConfigError("build_labels: vqvae model missing");
            const auto windows = raw_windows(run, models.raw_stats);
            HiCurve curve;
            curve.method = Method::vqvae;
            curve.values.reserve(windows.size());
            for (const auto& w : windows)
                curve.values.push_back(models.vq_raw->quantization_residual(w));
            return postprocess_hi(curve, smoother);
        }
        case Method::f_ae: {
            if (!models.ae_feat || !models.som_feat)
                throw ConfigError("build_labels: feature-ae model or SOM missing");
            const auto windows =
                feature_windows(run, features, models.feature_mean, models.feature_std);
            std::vector<std::vector<double>> latents;
            latents.reserve(windows.size());
            for (const auto& w : windows) latents.push_back(models.ae_feat->encode_latent(w));
            HiCurve curve = distance_hi(latents, *models.som_feat);
            curve.method = Method::f_ae;
            return postprocess_hi(curve, smoother);
        }
        case Method::f_vqvae: {
            if (!models.vq_feat) throw ConfigError("build_labels: feature-vqvae model missing");
            const auto windows =
                feature_windows(run, features, models.feature_mean, models.feature_std);
            HiCurve curve;
            curve.method = Method::f_vqvae;
            curve.values.reserve(windows.size());
            for (const auto& w : windows)
                curve.values.push_back(models.vq_feat->quantization_residual(w));
            return postprocess_hi(curve, smoother);
        }
    }
    throw ConfigError("build_labels: unknown method");
}

void write_label_csv(const std::filesystem::path& dir, const std::string& bearing,
                     const HiCurve& curve) {
    std::filesystem::create_directories(dir);
    const auto path = dir / ("labels_" + method_name(curve.method) + "_" + bearing + ".csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open label CSV for writing: " + path.string());
    out.precision(17);
    for (std::size_t i = 0; i < curve.values.size(); ++i)
        out << i << ',' << curve.values[i] << '\n';
    if (!out) throw IoError("label CSV write failed: " + path.string());
}

}  // namespace rulkit
