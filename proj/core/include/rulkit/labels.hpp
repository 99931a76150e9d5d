#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rulkit/features.hpp"
#include "rulkit/ingest.hpp"
#include "rulkit/models.hpp"
#include "rulkit/reduce.hpp"

namespace rulkit {

enum class Method { linear, piecewise, rms, pca, ae, vqvae, f_ae, f_vqvae };

std::string method_name(Method method);
Method method_from_string(const std::string& name);
bool method_needs_models(Method method);

struct HiCurve {
    std::vector<double> values;
    Method method = Method::linear;
    bool postprocessed = false;
};

// y_i = 1 - i/(n-1): full life mapped linearly onto [1, 0].
HiCurve linear_labels(std::size_t n);

// Plateau at 1 through fpt_index, then linear to 0 at the last record.
HiCurve piecewise_labels(std::size_t n, std::size_t fpt_index);

struct FptRule {
    std::size_t max_baseline = 500;
    double baseline_fraction = 0.2;
    double sigma = 3.0;
    std::size_t consecutive = 2;
};

struct FptResult {
    std::optional<std::size_t> index;
    double baseline_mean = 0.0;
    double baseline_std = 0.0;
    std::size_t baseline_len = 0;
    FptRule rule;
};

// First index (at or after the baseline block) where `consecutive` successive
// values exceed baseline mean + sigma * std.
FptResult fpt_3sigma(const std::vector<double>& series, const FptRule& rule = {});

// Per-record RMS of the horizontal channel (raw HI and the FPT input series).
HiCurve rms_hi(const std::vector<VibrationRecord>& run);

// Distance-to-reference health indicators (raw, pre-postprocess): best
// matching SOM node distance per latent, or the flattened nearest-code
// quantization residual norm against a codebook.
HiCurve distance_hi(const std::vector<std::vector<double>>& latents, const SomGrid& grid);
HiCurve distance_hi(const std::vector<std::vector<double>>& latents, const Codebook& codebook);

// smooth -> orient (negate when correlation with time is positive) -> min-max
// scale onto [0,1].
HiCurve postprocess_hi(const HiCurve& raw, const SmootherConfig& smoother = {});

// Everything a learned label method may need, trained upstream.
struct LabelModels {
    std::optional<PcaModel> pca;
    std::shared_ptr<AeModel> ae_raw;
    std::shared_ptr<AeModel> ae_feat;
    std::shared_ptr<VqVaeModel> vq_raw;
    std::shared_ptr<VqVaeModel> vq_feat;
    std::optional<SomGrid> som_raw;
    std::optional<SomGrid> som_feat;
    NormStats raw_stats;               // normalization for raw windows
    std::vector<double> feature_mean;  // z-score scaling for feature windows
    std::vector<double> feature_std;
};

// Normalized leading crop of the horizontal channel, one window per record.
std::vector<std::vector<double>> raw_windows(const std::vector<VibrationRecord>& run,
                                             const NormStats& stats, std::size_t crop_len = 1024);

void fit_feature_scaler(const std::vector<FeatureVector38>& rows, std::vector<double>& mean,
                        std::vector<double>& stddev);

// Z-scored feature vectors, one window per record.
std::vector<std::vector<double>> feature_windows(const std::vector<VibrationRecord>& run,
                                                 const FeatureConfig& cfg,
                                                 const std::vector<double>& mean,
                                                 const std::vector<double>& stddev);

// Dispatch to one of the eight label methods. Closed-form methods skip the
// smoothing/orientation step; learned methods require their LabelModels entry.
HiCurve build_labels(Method method, const std::vector<VibrationRecord>& run,
                     const LabelModels& models, const SmootherConfig& smoother = {},
                     const FeatureConfig& features = {}, const FptRule& fpt_rule = {});

void write_label_csv(const std::filesystem::path& dir, const std::string& bearing,
                     const HiCurve& curve);

}  // namespace rulkit
