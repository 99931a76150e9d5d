#include "rulkit/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rulkit/checkpoint.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/models.hpp"
#include "rulkit/reduce.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {
namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + value + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size())
        throw ConfigError("bad integer value for " + key + ": '" + value + "'");
    return v;
}

std::size_t to_size(const std::string& key, const std::string& value) {
    return static_cast<std::size_t>(to_u64(key, value));
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("bad boolean value for " + key + ": '" + value + "'");
}

// Keys shared by label_training.* and predictor_training.*.
bool apply_training_key(TrainConfig& tc, const std::string& field, const std::string& key,
                        const std::string& value) {
    if (field == "lr")
        tc.lr = to_double(key, value);
    else if (field == "batch_size")
        tc.batch_size = to_size(key, value);
    else if (field == "max_epochs")
        tc.max_epochs = to_size(key, value);
    else if (field == "patience")
        tc.patience = to_size(key, value);
    else if (field == "weight_decay")
        tc.weight_decay = to_double(key, value);
    else if (field == "val_fraction")
        tc.val_fraction = to_double(key, value);
    else
        return false;
    return true;
}

std::string fmt(double v, const char* spec = "%.10g") {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

MetricReport average_outcomes(const std::vector<SeedOutcome>& seeds, std::size_t mv_window) {
    MetricReport avg;
    avg.mv_window = mv_window;
    std::size_t n = 0;
    for (const auto& so : seeds) {
        if (so.failed) continue;
        ++n;
        avg.rmse += so.metrics.rmse;
        avg.mae += so.metrics.mae;
        avg.score += so.metrics.score;
        avg.monotonicity += so.metrics.monotonicity;
        avg.trendiness += so.metrics.trendiness;
        avg.mad += so.metrics.mad;
        avg.mv += so.metrics.mv;
        avg.mv_window = so.metrics.mv_window;
    }
    if (n == 0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        avg.rmse = avg.mae = avg.score = avg.monotonicity = nan;
        avg.trendiness = avg.mad = avg.mv = nan;
        return avg;
    }
    const double inv = 1.0 / static_cast<double>(n);
    avg.rmse *= inv;
    avg.mae *= inv;
    avg.score *= inv;
    avg.monotonicity *= inv;
    avg.trendiness *= inv;
    avg.mad *= inv;
    avg.mv *= inv;
    return avg;
}

namespace {

double scaled_score(const SeedOutcome& so, double scale) {
    if (scale == 1.0) return so.metrics.score;
    std::vector<double> p(so.prediction), l(so.label);
    for (auto& v : p) v *= scale;
    for (auto& v : l) v *= scale;
    return score(p, l);
}

const SeedOutcome* display_outcome(const FoldResult& fold) {
    for (const auto& so : fold.seeds)
        if (!so.failed) return &so;
    return fold.seeds.empty() ? nullptr : &fold.seeds.front();
}

json jnum(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double jget(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json metrics_to_json(const MetricReport& m) {
    json j;
    j["rmse"] = jnum(m.rmse);
    j["mae"] = jnum(m.mae);
    j["score"] = jnum(m.score);
    j["mon"] = jnum(m.monotonicity);
    j["tend"] = jnum(m.trendiness);
    j["mad"] = jnum(m.mad);
    j["mv"] = jnum(m.mv);
    j["mv_window"] = m.mv_window;
    return j;
}

MetricReport metrics_from_json(const json& j) {
    MetricReport m;
    m.rmse = jget(j.at("rmse"));
    m.mae = jget(j.at("mae"));
    m.score = jget(j.at("score"));
    m.monotonicity = jget(j.at("mon"));
    m.trendiness = jget(j.at("tend"));
    m.mad = jget(j.at("mad"));
    m.mv = jget(j.at("mv"));
    m.mv_window = j.at("mv_window").get<std::size_t>();
    return m;
}

// One predictor trained on the given runs against their label curves.
AstcnModel train_predictor(const std::vector<BearingRun>& runs,
                           const std::vector<std::size_t>& train_indices,
                           const std::vector<HiCurve>& labels, const NormStats& stats,
                           const ExperimentConfig& cfg, std::uint64_t stream_seed) {
    std::vector<VibrationRecord> samples;
    std::vector<double> targets;
    for (const std::size_t idx : train_indices) {
        const auto& run = runs[idx];
        for (std::size_t r = 0; r < run.records.size(); ++r) {
            samples.push_back(normalize(run.records[r], stats));
            targets.push_back(labels[idx].values[r]);
        }
    }
    AstcnModel predictor(stream_seed);
    predictor.bind_dataset(std::move(samples), std::move(targets));
    TrainConfig tc = cfg.predictor_training;
    tc.seed = stream_seed;
    fit(predictor, tc);
    return predictor;
}

std::vector<double> predict_run(AstcnModel& predictor, const BearingRun& run,
                                const NormStats& stats) {
    std::vector<VibrationRecord> samples;
    samples.reserve(run.records.size());
    for (const auto& rec : run.records) samples.push_back(normalize(rec, stats));
    return predictor.predict(samples);
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const auto dot = key.find('.');
    const std::string head = key.substr(0, dot);
    const std::string field = dot == std::string::npos ? std::string{} : key.substr(dot + 1);

    if (key == "dataset_root") {
        cfg.dataset_root = value;
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "method") {
        cfg.method = method_from_string(value);
    } else if (key == "seeds") {
        cfg.seeds = parse_seed_list(value);
    } else if (key == "mv_window") {
        cfg.mv_window = to_size(key, value);
        if (cfg.mv_window == 0) throw ConfigError("mv_window must be positive");
    } else if (key == "write_plots") {
        cfg.write_plots = to_bool(key, value);
    } else if (head == "label_training") {
        if (!apply_training_key(cfg.label_training, field, key, value))
            throw ConfigError("unknown config key: " + key);
    } else if (head == "predictor_training") {
        if (!apply_training_key(cfg.predictor_training, field, key, value))
            throw ConfigError("unknown config key: " + key);
    } else if (key == "smoother.window") {
        cfg.smoother.window = to_size(key, value);
    } else if (key == "smoother.polynomial_order") {
        cfg.smoother.polynomial_order = to_size(key, value);
    } else if (key == "smoother.boundary") {
        if (value == "polyfit")
            cfg.smoother.boundary = SgBoundary::polyfit;
        else if (value == "mirror")
            cfg.smoother.boundary = SgBoundary::mirror;
        else
            throw ConfigError("unknown smoother boundary: '" + value + "'");
    } else if (key == "features.crop_len") {
        cfg.features.crop_len = to_size(key, value);
    } else if (key == "features.sample_rate") {
        cfg.features.sample_rate = to_double(key, value);
    } else if (key == "features.wavelet") {
        if (value == "haar")
            cfg.features.wavelet = Wavelet::haar;
        else if (value == "db4")
            cfg.features.wavelet = Wavelet::db4;
        else
            throw ConfigError("unknown wavelet: '" + value + "'");
    } else if (key == "fpt.max_baseline") {
        cfg.fpt.max_baseline = to_size(key, value);
    } else if (key == "fpt.baseline_fraction") {
        cfg.fpt.baseline_fraction = to_double(key, value);
    } else if (key == "fpt.sigma") {
        cfg.fpt.sigma = to_double(key, value);
    } else if (key == "fpt.consecutive") {
        cfg.fpt.consecutive = to_size(key, value);
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        seeds.push_back(to_u64("seeds", item));
    }
    if (seeds.empty()) throw ConfigError("seed list is empty");
    return seeds;
}

std::size_t clamp_window(std::size_t window, std::size_t n) {
    if (n == 0) return 1;
    std::size_t w = std::min(window, n);
    if (w % 2 == 0) --w;
    return std::max<std::size_t>(w, 1);
}

SmootherConfig clamp_smoother(const SmootherConfig& smoother, std::size_t n) {
    SmootherConfig out = smoother;
    out.window = clamp_window(smoother.window, n);
    if (out.polynomial_order + 1 > out.window) out.polynomial_order = out.window - 1;
    return out;
}

std::vector<Fold> make_folds(std::size_t n_runs) {
    if (n_runs != 7)
        throw ConfigError("leave-one-bearing-out needs exactly 7 runs, got " +
                          std::to_string(n_runs));
    std::vector<Fold> folds(n_runs);
    for (std::size_t i = 0; i < n_runs; ++i) {
        folds[i].test_index = i;
        for (std::size_t j = 0; j < n_runs; ++j)
            if (j != i) folds[i].train_indices.push_back(j);
    }
    return folds;
}

std::vector<BearingRun> load_dataset(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root))
        throw IoError("dataset root is not a directory: " + root.string());
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("Bearing", 0) == 0) dirs.push_back(entry.path());
    }
    if (dirs.empty()) throw NoDataError("no Bearing* directories under " + root.string());
    std::sort(dirs.begin(), dirs.end());
    std::vector<BearingRun> runs;
    runs.reserve(dirs.size());
    for (const auto& dir : dirs)
        runs.push_back({dir.filename().string(), load_bearing(dir)});
    return runs;
}

LabelModels train_label_models(Method method, const std::vector<BearingRun>& runs,
                               const ExperimentConfig& cfg, std::uint64_t seed) {
    LabelModels m;
    if (!method_needs_models(method)) return m;
    if (runs.empty()) throw NoDataError("train_label_models: no runs");

    const bool needs_raw = method == Method::ae || method == Method::vqvae;
    const bool needs_features =
        method == Method::pca || method == Method::f_ae || method == Method::f_vqvae;

    std::vector<std::vector<double>> raw_wins, feat_wins;
    if (needs_raw) {
        std::vector<const VibrationRecord*> all;
        for (const auto& run : runs)
            for (const auto& rec : run.records) all.push_back(&rec);
        m.raw_stats = fit_norm_stats(all);
        for (const auto& run : runs) {
            auto wins = raw_windows(run.records, m.raw_stats, cfg.features.crop_len);
            raw_wins.insert(raw_wins.end(), std::make_move_iterator(wins.begin()),
                            std::make_move_iterator(wins.end()));
        }
    }
    if (needs_features) {
        std::vector<FeatureVector38> rows;
        for (const auto& run : runs)
            for (const auto& rec : run.records) rows.push_back(feature_vector(rec, cfg.features));
        fit_feature_scaler(rows, m.feature_mean, m.feature_std);
        for (const auto& run : runs) {
            auto wins = feature_windows(run.records, cfg.features, m.feature_mean, m.feature_std);
            feat_wins.insert(feat_wins.end(), std::make_move_iterator(wins.begin()),
                             std::make_move_iterator(wins.end()));
        }
    }

    const auto fit_codec = [&](Trainable& model, std::uint64_t stream) {
        TrainConfig tc = cfg.label_training;
        tc.seed = stream;
        fit(model, tc);
    };
    const auto fit_som = [&](const std::shared_ptr<AeModel>& ae,
                             const std::vector<std::vector<double>>& wins, std::uint64_t stream) {
        std::vector<std::vector<double>> latents;
        latents.reserve(wins.size());
        for (const auto& w : wins) latents.push_back(ae->encode_latent(w));
        SomSpec spec;
        spec.seed = stream;
        return som_fit(latents, spec);
    };

    switch (method) {
        case Method::pca:
            m.pca = pca_fit(feat_wins);
            break;
        case Method::ae: {
            const std::uint64_t stream = derive_seed(seed, 11);
            m.ae_raw = std::make_shared<AeModel>(InputKind::raw, stream);
            m.ae_raw->bind_dataset(raw_wins);
            fit_codec(*m.ae_raw, stream);
            m.som_raw = fit_som(m.ae_raw, raw_wins, derive_seed(seed, 12));
            break;
        }
        case Method::vqvae: {
            const std::uint64_t stream = derive_seed(seed, 13);
            m.vq_raw = std::make_shared<VqVaeModel>(InputKind::raw, stream);
            m.vq_raw->bind_dataset(raw_wins);
            fit_codec(*m.vq_raw, stream);
            break;
        }
        case Method::f_ae: {
            const std::uint64_t stream = derive_seed(seed, 14);
            m.ae_feat = std::make_shared<AeModel>(InputKind::feature, stream);
            m.ae_feat->bind_dataset(feat_wins);
            fit_codec(*m.ae_feat, stream);
            m.som_feat = fit_som(m.ae_feat, feat_wins, derive_seed(seed, 15));
            break;
        }
        case Method::f_vqvae: {
            const std::uint64_t stream = derive_seed(seed, 16);
            m.vq_feat = std::make_shared<VqVaeModel>(InputKind::feature, stream);
            m.vq_feat->bind_dataset(feat_wins);
            fit_codec(*m.vq_feat, stream);
            break;
        }
        default:
            break;
    }
    return m;
}

std::vector<HiCurve> build_all_labels(Method method, const std::vector<BearingRun>& runs,
                                      const LabelModels& models, const ExperimentConfig& cfg) {
    std::vector<HiCurve> curves;
    curves.reserve(runs.size());
    for (const auto& run : runs) {
        const auto smoother = clamp_smoother(cfg.smoother, run.records.size());
        curves.push_back(build_labels(method, run.records, models, smoother, cfg.features,
                                      cfg.fpt));
    }
    return curves;
}

std::uint64_t training_membership_hash(const std::vector<BearingRun>& runs,
                                       const std::vector<std::size_t>& train_indices) {
    std::vector<std::string> names;
    names.reserve(train_indices.size());
    for (const std::size_t idx : train_indices) names.push_back(runs[idx].name);
    std::sort(names.begin(), names.end());
    std::string joined;
    for (const auto& name : names) {
        joined += name;
        joined += '\n';
    }
    return fnv1a_bytes(joined.data(), joined.size());
}

SeedOutcome run_fold(const std::vector<BearingRun>& runs, const std::vector<HiCurve>& labels,
                     const Fold& fold, const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedOutcome out;
    out.seed = seed;
    out.label = labels[fold.test_index].values;
    out.train_hash = training_membership_hash(runs, fold.train_indices);

    std::vector<const VibrationRecord*> train_ptrs;
    for (const std::size_t idx : fold.train_indices)
        for (const auto& rec : runs[idx].records) train_ptrs.push_back(&rec);
    const NormStats stats = fit_norm_stats(train_ptrs);

    const std::uint64_t stream = derive_seed(seed, 100 + fold.test_index);
    AstcnModel predictor = train_predictor(runs, fold.train_indices, labels, stats, cfg, stream);
    out.prediction = predict_run(predictor, runs[fold.test_index], stats);
    out.metrics = evaluate(out.prediction, out.label,
                           std::max<std::size_t>(std::min(cfg.mv_window, out.prediction.size()),
                                                 1));
    return out;
}

ExperimentResult run_experiment(const std::vector<BearingRun>& runs,
                                const ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) throw ConfigError("run_experiment: seed list is empty");
    const auto folds = make_folds(runs.size());

    ExperimentResult result;
    result.method = cfg.method;
    result.mv_window = cfg.mv_window;

    struct SeedLabels {
        bool failed = false;
        std::string failure;
        std::vector<HiCurve> curves;
    };
    std::vector<SeedLabels> by_seed(cfg.seeds.size());
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        try {
            const LabelModels models = train_label_models(cfg.method, runs, cfg, cfg.seeds[i]);
            by_seed[i].curves = build_all_labels(cfg.method, runs, models, cfg);
        } catch (const DivergenceError& e) {
            by_seed[i].failed = true;
            by_seed[i].failure = std::string("label training diverged: ") + e.what();
        } catch (const DegenerateDataError& e) {
            by_seed[i].failed = true;
            by_seed[i].failure = std::string("label stage degenerate: ") + e.what();
        }
        if (by_seed[i].failed)
            std::cerr << "[rulkit] seed " << cfg.seeds[i] << ": " << by_seed[i].failure << '\n';
    }

    for (const auto& fold : folds) {
        FoldResult fr;
        fr.bearing = runs[fold.test_index].name;
        fr.test_index = fold.test_index;
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            SeedOutcome so;
            if (by_seed[i].failed) {
                so.seed = cfg.seeds[i];
                so.failed = true;
                so.failure = by_seed[i].failure;
            } else {
                const auto mark_failed = [&](const char* what) {
                    so = SeedOutcome{};
                    so.seed = cfg.seeds[i];
                    so.failed = true;
                    so.failure = what;
                    so.label = by_seed[i].curves[fold.test_index].values;
                };
                try {
                    so = run_fold(runs, by_seed[i].curves, fold, cfg, cfg.seeds[i]);
                } catch (const DivergenceError& e) {
                    mark_failed(e.what());
                } catch (const DegenerateDataError& e) {
                    mark_failed(e.what());
                }
            }
            if (so.failed)
                std::cerr << "[rulkit] fold " << fr.bearing << " seed " << so.seed
                          << " FAILED: " << so.failure << '\n';
            fr.seeds.push_back(std::move(so));
        }
        fr.averaged = average_outcomes(fr.seeds, cfg.mv_window);
        fr.surviving = static_cast<std::size_t>(
            std::count_if(fr.seeds.begin(), fr.seeds.end(),
                          [](const SeedOutcome& so) { return !so.failed; }));
        result.folds.push_back(std::move(fr));
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    return run_experiment(load_dataset(cfg.dataset_root), cfg);
}

GeneralizationResult run_generalization(const std::vector<BearingRun>& train_runs,
                                        const std::vector<BearingRun>& test_runs,
                                        const ExperimentConfig& cfg) {
    if (train_runs.empty()) throw ConfigError("run_generalization: no training runs");
    if (test_runs.empty()) throw ConfigError("run_generalization: no test runs");
    if (cfg.seeds.empty()) throw ConfigError("run_generalization: seed list is empty");
    std::filesystem::create_directories(cfg.out_dir);

    GeneralizationResult gen;
    gen.evaluation.method = cfg.method;
    gen.evaluation.mv_window = cfg.mv_window;

    std::vector<std::size_t> all_indices(train_runs.size());
    std::iota(all_indices.begin(), all_indices.end(), 0);
    const std::uint64_t membership = training_membership_hash(train_runs, all_indices);

    struct PerSeed {
        bool failed = false;
        std::string failure;
        std::vector<HiCurve> test_labels;
        std::shared_ptr<AstcnModel> predictor;
        NormStats stats;
        std::filesystem::path ckpt;
    };
    std::vector<PerSeed> trained(cfg.seeds.size());
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const std::uint64_t seed = cfg.seeds[i];
        auto& slot = trained[i];
        try {
            const LabelModels models = train_label_models(cfg.method, train_runs, cfg, seed);
            const auto train_labels = build_all_labels(cfg.method, train_runs, models, cfg);
            slot.test_labels = build_all_labels(cfg.method, test_runs, models, cfg);

            std::vector<const VibrationRecord*> ptrs;
            for (const auto& run : train_runs)
                for (const auto& rec : run.records) ptrs.push_back(&rec);
            slot.stats = fit_norm_stats(ptrs);

            const std::uint64_t stream = derive_seed(seed, 200);
            slot.predictor = std::make_shared<AstcnModel>(train_predictor(
                train_runs, all_indices, train_labels, slot.stats, cfg, stream));

            slot.ckpt = cfg.out_dir / ("predictor_" + method_name(cfg.method) + "_seed" +
                                       std::to_string(seed) + ".ckpt");
            save_checkpoint(slot.ckpt, slot.predictor->checkpoint());
            gen.hash_before.push_back(fnv1a_file(slot.ckpt));
        } catch (const DivergenceError& e) {
            slot.failed = true;
            slot.failure = std::string("training diverged: ") + e.what();
        } catch (const DegenerateDataError& e) {
            slot.failed = true;
            slot.failure = std::string("training degenerate: ") + e.what();
        }
        if (slot.failed)
            std::cerr << "[rulkit] generalization seed " << seed << " FAILED: " << slot.failure
                      << '\n';
    }

    for (std::size_t t = 0; t < test_runs.size(); ++t) {
        FoldResult fr;
        fr.bearing = test_runs[t].name;
        fr.test_index = t;
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            auto& slot = trained[i];
            SeedOutcome so;
            so.seed = cfg.seeds[i];
            if (slot.failed) {
                so.failed = true;
                so.failure = slot.failure;
            } else {
                so.label = slot.test_labels[t].values;
                so.train_hash = membership;
                so.prediction = predict_run(*slot.predictor, test_runs[t], slot.stats);
                try {
                    so.metrics =
                        evaluate(so.prediction, so.label,
                                 std::max<std::size_t>(
                                     std::min(cfg.mv_window, so.prediction.size()), 1));
                } catch (const DegenerateDataError& e) {
                    so.failed = true;
                    so.failure = std::string("evaluation degenerate: ") + e.what();
                    std::cerr << "[rulkit] generalization " << fr.bearing << " seed " << so.seed
                              << " FAILED: " << so.failure << '\n';
                }
            }
            fr.seeds.push_back(std::move(so));
        }
        fr.averaged = average_outcomes(fr.seeds, cfg.mv_window);
        fr.surviving = static_cast<std::size_t>(
            std::count_if(fr.seeds.begin(), fr.seeds.end(),
                          [](const SeedOutcome& so) { return !so.failed; }));
        gen.evaluation.folds.push_back(std::move(fr));
    }

    // Inference must leave every parameter untouched: re-serialize and compare.
    for (auto& slot : trained) {
        if (slot.failed) continue;
        save_checkpoint(slot.ckpt, slot.predictor->checkpoint());
        gen.hash_after.push_back(fnv1a_file(slot.ckpt));
    }
    gen.frozen = gen.hash_before == gen.hash_after;
    return gen;
}

std::string render_summary_csv(const ExperimentResult& result, double score_scale) {
    std::string out = "method,bearing,seed,rmse,mae,score,mon,tend,mad,mv\n";
    const std::string mname = method_name(result.method);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto row = [&](const std::string& bearing, const std::string& seed,
                         const MetricReport& m, double score_value) {
        out += mname + ',' + bearing + ',' + seed + ',' + fmt(m.rmse) + ',' + fmt(m.mae) + ',' +
               fmt(score_value) + ',' + fmt(m.monotonicity) + ',' + fmt(m.trendiness) + ',' +
               fmt(m.mad) + ',' + fmt(m.mv) + '\n';
    };
    for (const auto& fold : result.folds) {
        double score_sum = 0.0;
        std::size_t n = 0;
        for (const auto& so : fold.seeds) {
            if (so.failed) {
                MetricReport empty;
                empty.rmse = empty.mae = empty.score = empty.monotonicity = nan;
                empty.trendiness = empty.mad = empty.mv = nan;
                row(fold.bearing, std::to_string(so.seed), empty, nan);
                continue;
            }
            const double s = scaled_score(so, score_scale);
            score_sum += s;
            ++n;
            row(fold.bearing, std::to_string(so.seed), so.metrics, s);
        }
        row(fold.bearing, "avg", fold.averaged, n > 0 ? score_sum / static_cast<double>(n) : nan);
    }
    return out;
}

std::string render_curve_csv(const FoldResult& fold) {
    const SeedOutcome* so = display_outcome(fold);
    std::string out = "index,label,prediction,linear\n";
    if (so == nullptr) return out;
    const std::size_t n = std::max(so->label.size(), so->prediction.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double label = i < so->label.size() ? so->label[i]
                                                  : std::numeric_limits<double>::quiet_NaN();
        const double pred = i < so->prediction.size()
                                ? so->prediction[i]
                                : std::numeric_limits<double>::quiet_NaN();
        const double lin =
            n > 1 ? 1.0 - static_cast<double>(i) / static_cast<double>(n - 1) : 1.0;
        out += std::to_string(i) + ',' + fmt(label, "%.17g") + ',' + fmt(pred, "%.17g") + ',' +
               fmt(lin, "%.17g") + '\n';
    }
    return out;
}

std::string render_curve_svg(const FoldResult& fold, Method method) {
    const SeedOutcome* so = display_outcome(fold);
    const std::vector<double> empty;
    const auto& label = so != nullptr ? so->label : empty;
    const auto& pred = so != nullptr ? so->prediction : empty;
    const std::size_t n = std::max(label.size(), pred.size());

    const double width = 720, height = 420;
    const double left = 60, right = 16, top = 28, bottom = 40;
    const double pw = width - left - right, ph = height - top - bottom;

    double ymin = 0.0, ymax = 1.0;
    const auto stretch = [&](const std::vector<double>& v) {
        for (const double y : v) {
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    };
    stretch(label);
    stretch(pred);
    if (ymax <= ymin) ymax = ymin + 1.0;

    const auto px = [&](std::size_t i) {
        return n > 1 ? left + static_cast<double>(i) * pw / static_cast<double>(n - 1)
                     : left + pw / 2.0;
    };
    const auto py = [&](double v) { return top + (ymax - v) * ph / (ymax - ymin); };
    const auto polyline = [&](const std::vector<double>& v, const char* color,
                              const char* dash) {
        if (v.empty()) return std::string{};
        std::string pts;
        char buf[48];
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(i), py(v[i]));
            pts += buf;
        }
        if (!pts.empty()) pts.pop_back();
        std::string elem = "<polyline fill=\"none\" stroke=\"";
        elem += color;
        elem += "\" stroke-width=\"1.5\"";
        if (dash[0] != '\0') {
            elem += " stroke-dasharray=\"";
            elem += dash;
            elem += "\"";
        }
        elem += " points=\"" + pts + "\"/>\n";
        return elem;
    };

    std::vector<double> linear(n);
    for (std::size_t i = 0; i < n; ++i)
        linear[i] = n > 1 ? 1.0 - static_cast<double>(i) / static_cast<double>(n - 1) : 1.0;

    std::string svg;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 %.0f %.0f\" "
                  "font-family=\"monospace\" font-size=\"12\">\n",
                  width, height);
    svg += buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof(buf), "<text x=\"%.0f\" y=\"18\">%s / %s</text>\n", left,
                  method_name(method).c_str(), fold.bearing.c_str());
    svg += buf;
    // axes
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  left, top + ph, left + pw, top + ph);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  left, top, left, top + ph);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n", left - 6,
                  top + 4, ymax);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n", left - 6,
                  top + ph + 4, ymin);
    svg += buf;
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\">0</text>\n", left,
                  top + ph + 16);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%zu</text>\n", left + pw,
                  top + ph + 16, n > 0 ? n - 1 : 0);
    svg += buf;
    svg += polyline(label, "#1f77b4", "");
    svg += polyline(pred, "#d62728", "");
    svg += polyline(linear, "#7f7f7f", "6 4");
    // legend
    const double lx = left + pw - 150, ly = top + 10;
    const auto legend = [&](double y, const char* color, const char* dash, const char* text) {
        std::string item;
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                      "stroke-width=\"1.5\"%s%s%s/>\n",
                      lx, y, lx + 24, y, color, dash[0] ? " stroke-dasharray=\"" : "", dash,
                      dash[0] ? "\"" : "");
        item += buf;
        std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n", lx + 30,
                      y + 4, text);
        item += buf;
        return item;
    };
    svg += legend(ly, "#1f77b4", "", "label");
    svg += legend(ly + 16, "#d62728", "", "prediction");
    svg += legend(ly + 32, "#7f7f7f", "6 4", "linear");
    svg += "</svg>\n";
    return svg;
}

void emit_reports(const ExperimentResult& result, const std::filesystem::path& out_dir,
                  bool write_plots) {
    if (result.folds.empty()) throw ConfigError("emit_reports: no results");
    try {
        std::filesystem::create_directories(out_dir);
    } catch (const std::filesystem::filesystem_error& e) {
        throw IoError(std::string("cannot create output directory: ") + e.what());
    }
    write_text(out_dir / "summary.csv", render_summary_csv(result, 1.0));
    write_text(out_dir / "summary_score100.csv", render_summary_csv(result, 100.0));
    const std::string mname = method_name(result.method);
    for (const auto& fold : result.folds) {
        write_text(out_dir / ("curve_" + mname + "_" + fold.bearing + ".csv"),
                   render_curve_csv(fold));
        if (write_plots)
            write_text(out_dir / ("plot_" + mname + "_" + fold.bearing + ".svg"),
                       render_curve_svg(fold, result.method));
    }
    save_results_json(result, out_dir / "fold_results.json");
}

void save_results_json(const ExperimentResult& result, const std::filesystem::path& path) {
    json j;
    j["method"] = method_name(result.method);
    j["mv_window"] = result.mv_window;
    j["folds"] = json::array();
    for (const auto& fold : result.folds) {
        json jf;
        jf["bearing"] = fold.bearing;
        jf["test_index"] = fold.test_index;
        jf["surviving"] = fold.surviving;
        jf["averaged"] = metrics_to_json(fold.averaged);
        jf["seeds"] = json::array();
        for (const auto& so : fold.seeds) {
            json js;
            js["seed"] = so.seed;
            js["failed"] = so.failed;
            js["failure"] = so.failure;
            js["train_hash"] = so.train_hash;
            js["metrics"] = metrics_to_json(so.metrics);
            js["label"] = so.label;
            js["prediction"] = so.prediction;
            jf["seeds"].push_back(std::move(js));
        }
        j["folds"].push_back(std::move(jf));
    }
    write_text(path, j.dump(2) + "\n");
}

ExperimentResult load_results_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open results file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("bad results file " + path.string() + ": " + e.what());
    }
    try {
        ExperimentResult result;
        result.method = method_from_string(j.at("method").get<std::string>());
        result.mv_window = j.at("mv_window").get<std::size_t>();
        for (const auto& jf : j.at("folds")) {
            FoldResult fold;
            fold.bearing = jf.at("bearing").get<std::string>();
            fold.test_index = jf.at("test_index").get<std::size_t>();
            fold.surviving = jf.at("surviving").get<std::size_t>();
            fold.averaged = metrics_from_json(jf.at("averaged"));
            for (const auto& js : jf.at("seeds")) {
                SeedOutcome so;
                so.seed = js.at("seed").get<std::uint64_t>();
                so.failed = js.at("failed").get<bool>();
                so.failure = js.at("failure").get<std::string>();
                so.train_hash = js.at("train_hash").get<std::uint64_t>();
                so.metrics = metrics_from_json(js.at("metrics"));
                so.label = js.at("label").get<std::vector<double>>();
                so.prediction = js.at("prediction").get<std::vector<double>>();
                fold.seeds.push_back(std::move(so));
            }
            result.folds.push_back(std::move(fold));
        }
        return result;
    } catch (const json::exception& e) {
        throw ParseError("bad results file " + path.string() + ": " + e.what());
    }
}

}  // namespace rulkit
