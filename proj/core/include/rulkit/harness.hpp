#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rulkit/features.hpp"
#include "rulkit/ingest.hpp"
#include "rulkit/labels.hpp"
#include "rulkit/metrics.hpp"
#include "rulkit/train.hpp"

namespace rulkit {

struct ExperimentConfig {
    std::filesystem::path dataset_root;
    std::filesystem::path out_dir = "out";
    Method method = Method::vqvae;
    TrainConfig label_training{.lr = 1e-3,
                               .batch_size = 256,
                               .max_epochs = 150,
                               .patience = 20,
                               .weight_decay = 0.0,
                               .seed = 15,
                               .val_fraction = 0.1};
    TrainConfig predictor_training;  // lr 1e-3, batch 128, epochs 100, patience 15
    std::vector<std::uint64_t> seeds = {15, 16, 25};
    std::size_t mv_window = 21;
    SmootherConfig smoother;
    FeatureConfig features;
    FptRule fpt;
    bool write_plots = true;
};

// key = value lines; dotted keys address nested fields
// (e.g. predictor_training.max_epochs = 30). '#' starts a comment.
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Largest usable odd window not exceeding the series length.
std::size_t clamp_window(std::size_t window, std::size_t n);
SmootherConfig clamp_smoother(const SmootherConfig& smoother, std::size_t n);

struct Fold {
    std::size_t test_index = 0;
    std::vector<std::size_t> train_indices;
};

// Leave-one-bearing-out over exactly seven runs.
std::vector<Fold> make_folds(std::size_t n_runs);

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;
    MetricReport metrics;
    std::vector<double> label;       // this seed's label curve for the test bearing
    std::vector<double> prediction;  // predictor output on the test bearing
    std::uint64_t train_hash = 0;    // provenance hash of the training membership
};

struct FoldResult {
    std::string bearing;
    std::size_t test_index = 0;
    std::vector<SeedOutcome> seeds;
    MetricReport averaged;  // arithmetic mean over the surviving seeds
    std::size_t surviving = 0;
};

struct ExperimentResult {
    Method method = Method::linear;
    std::size_t mv_window = 21;
    std::vector<FoldResult> folds;
};

// Field-wise arithmetic mean over the seeds that did not fail; all-NaN when
// every seed failed.
MetricReport average_outcomes(const std::vector<SeedOutcome>& seeds, std::size_t mv_window);

// Every Bearing* directory under root, sorted by name.
std::vector<BearingRun> load_dataset(const std::filesystem::path& root);

// Label models for one seed, trained on all provided runs.
LabelModels train_label_models(Method method, const std::vector<BearingRun>& runs,
                               const ExperimentConfig& cfg, std::uint64_t seed);

// One postprocessed label curve per run.
std::vector<HiCurve> build_all_labels(Method method, const std::vector<BearingRun>& runs,
                                      const LabelModels& models, const ExperimentConfig& cfg);

// FNV-1a over the sorted training-bearing names; excludes the test bearing by
// construction, so two folds sharing a training set hash identically.
std::uint64_t training_membership_hash(const std::vector<BearingRun>& runs,
                                       const std::vector<std::size_t>& train_indices);

// One (fold, seed) unit: trains a predictor on the training runs against this
// seed's label curves (normalization statistics come from those runs only)
// and evaluates it on the held-out run. Divergence propagates to the caller.
SeedOutcome run_fold(const std::vector<BearingRun>& runs, const std::vector<HiCurve>& labels,
                     const Fold& fold, const ExperimentConfig& cfg, std::uint64_t seed);

// Full leave-one-bearing-out experiment: per seed, label models train on all
// runs and the predictor trains on the six non-test runs. A diverging
// (fold, seed) is marked failed and skipped in the averages.
ExperimentResult run_experiment(const std::vector<BearingRun>& runs, const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct GeneralizationResult {
    ExperimentResult evaluation;             // one FoldResult per test run, inference only
    std::vector<std::uint64_t> hash_before;  // checkpoint digests around the run
    std::vector<std::uint64_t> hash_after;
    bool frozen = true;  // hashes match: no parameter moved during inference
};

// Trains label models and one predictor per seed on the training runs, saves
// checkpoints under cfg.out_dir, then evaluates the test runs without any
// parameter update.
GeneralizationResult run_generalization(const std::vector<BearingRun>& train_runs,
                                        const std::vector<BearingRun>& test_runs,
                                        const ExperimentConfig& cfg);

// summary.csv (per-seed rows plus an avg row per bearing), a x100-scaled score
// variant, one curve CSV and one SVG per bearing, and fold_results.json from
// which `report` can regenerate everything byte for byte.
void emit_reports(const ExperimentResult& result, const std::filesystem::path& out_dir,
                  bool write_plots = true);

void save_results_json(const ExperimentResult& result, const std::filesystem::path& path);
ExperimentResult load_results_json(const std::filesystem::path& path);

std::string render_summary_csv(const ExperimentResult& result, double score_scale = 1.0);
std::string render_curve_csv(const FoldResult& fold);
std::string render_curve_svg(const FoldResult& fold, Method method);

}  // namespace rulkit
