// rulkit CLI: synthetic corpora, dataset checks, feature dumps, label and
// predictor training, cross-condition generalization, and report rendering.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rulkit/checkpoint.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/features.hpp"
#include "rulkit/harness.hpp"
#include "rulkit/ingest.hpp"
#include "rulkit/labels.hpp"
#include "rulkit/metrics.hpp"
#include "rulkit/models.hpp"
#include "rulkit/reduce.hpp"
#include "rulkit/synth.hpp"

namespace {

namespace fs = std::filesystem;

double channel_rms(const std::vector<double>& x) {
    double acc = 0.0;
    for (const double v : x) acc += v * v;
    return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

int cmd_synth(const rulkit::ExperimentConfig& cfg, const rulkit::CorpusSpec& spec) {
    const auto corpus = rulkit::make_corpus(spec);
    rulkit::write_corpus(cfg.out_dir, corpus);
    std::cout << "wrote " << corpus.size() << " bearings x " << spec.records_per_bearing
              << " records under " << cfg.out_dir.string() << '\n';
    return 0;
}

int cmd_ingest_check(const fs::path& dir) {
    const auto runs = rulkit::load_dataset(dir);
    for (const auto& run : runs) {
        std::vector<double> rms;
        rms.reserve(run.records.size());
        for (const auto& rec : run.records) rms.push_back(channel_rms(rec.horizontal));
        const double span = run.records.size() > 1
                                ? run.records.back().timestamp - run.records.front().timestamp
                                : 0.0;
        const auto fpt = rulkit::fpt_3sigma(rms);
        std::cout << run.name << ": " << run.records.size() << " records, span " << span
                  << " s, horizontal RMS " << rms.front() << " -> " << rms.back() << ", fpt ";
        if (fpt.index)
            std::cout << *fpt.index << " (t=" << run.records[*fpt.index].timestamp << " s)";
        else
            std::cout << "none";
        std::cout << '\n';
    }
    std::cout << "ok: " << runs.size() << " bearings parsed\n";
    return 0;
}

int cmd_features(const fs::path& dir, const rulkit::ExperimentConfig& cfg) {
    const auto runs = rulkit::load_dataset(dir);
    fs::create_directories(cfg.out_dir);
    for (const auto& run : runs) {
        std::vector<rulkit::FeatureVector38> rows;
        rows.reserve(run.records.size());
        for (const auto& rec : run.records)
            rows.push_back(rulkit::feature_vector(rec, cfg.features));
        const auto path = cfg.out_dir / ("features_" + run.name + ".csv");
        rulkit::write_feature_csv(path, rows);
        std::cout << path.string() << ": " << rows.size() << " rows\n";
    }
    return 0;
}

int cmd_train_labels(const rulkit::ExperimentConfig& cfg) {
    const auto runs = rulkit::load_dataset(cfg.dataset_root);
    for (const std::uint64_t seed : cfg.seeds) {
        const auto models = rulkit::train_label_models(cfg.method, runs, cfg, seed);
        const auto curves = rulkit::build_all_labels(cfg.method, runs, models, cfg);
        const auto dir = cfg.out_dir / ("labels_seed" + std::to_string(seed));
        for (std::size_t i = 0; i < runs.size(); ++i)
            rulkit::write_label_csv(dir, runs[i].name, curves[i]);

        if (models.ae_raw)
            rulkit::save_checkpoint(dir / "ae-raw.ckpt", models.ae_raw->checkpoint());
        if (models.ae_feat)
            rulkit::save_checkpoint(dir / "ae-feat.ckpt", models.ae_feat->checkpoint());
        if (models.vq_raw)
            rulkit::save_checkpoint(dir / "vqvae-raw.ckpt", models.vq_raw->checkpoint());
        if (models.vq_feat)
            rulkit::save_checkpoint(dir / "vqvae-feat.ckpt", models.vq_feat->checkpoint());
        if (models.pca)
            rulkit::save_checkpoint(dir / "pca.ckpt", rulkit::to_checkpoint(*models.pca, seed));
        if (models.som_raw)
            rulkit::save_checkpoint(dir / "som-raw.ckpt",
                                    rulkit::to_checkpoint(*models.som_raw, seed));
        if (models.som_feat)
            rulkit::save_checkpoint(dir / "som-feat.ckpt",
                                    rulkit::to_checkpoint(*models.som_feat, seed));

        std::cout << "seed " << seed << ": wrote " << curves.size() << " label curves to "
                  << dir.string();
        if (models.vq_raw || models.vq_feat) {
            auto& vq = models.vq_raw ? *models.vq_raw : *models.vq_feat;
            std::cout << " (codebook perplexity " << vq.codebook().perplexity() << ")";
        }
        std::cout << '\n';
    }
    return 0;
}

int cmd_train_predict(const rulkit::ExperimentConfig& cfg, const std::string& fold_arg) {
    const auto runs = rulkit::load_dataset(cfg.dataset_root);
    rulkit::ExperimentResult result;
    if (fold_arg == "all") {
        result = rulkit::run_experiment(runs, cfg);
    } else {
        std::size_t id = 0;
        try {
            id = std::stoul(fold_arg);
        } catch (const std::exception&) {
            throw rulkit::ConfigError("--fold expects an index or 'all', got '" + fold_arg +
                                      "'");
        }
        const auto folds = rulkit::make_folds(runs.size());
        if (id >= folds.size())
            throw rulkit::ConfigError("fold index out of range: " + fold_arg);

        result.method = cfg.method;
        result.mv_window = cfg.mv_window;
        rulkit::FoldResult fr;
        fr.bearing = runs[id].name;
        fr.test_index = id;
        for (const std::uint64_t seed : cfg.seeds) {
            rulkit::SeedOutcome so;
            try {
                const auto models = rulkit::train_label_models(cfg.method, runs, cfg, seed);
                const auto curves = rulkit::build_all_labels(cfg.method, runs, models, cfg);
                so = rulkit::run_fold(runs, curves, folds[id], cfg, seed);
            } catch (const rulkit::DivergenceError& e) {
                so = rulkit::SeedOutcome{};
                so.seed = seed;
                so.failed = true;
                so.failure = e.what();
            } catch (const rulkit::DegenerateDataError& e) {
                so = rulkit::SeedOutcome{};
                so.seed = seed;
                so.failed = true;
                so.failure = e.what();
            }
            if (so.failed)
                std::cerr << "fold " << fr.bearing << " seed " << seed
                          << " FAILED: " << so.failure << '\n';
            if (!so.failed) ++fr.surviving;
            fr.seeds.push_back(std::move(so));
        }
        fr.averaged = rulkit::average_outcomes(fr.seeds, cfg.mv_window);
        result.folds.push_back(std::move(fr));
    }
    rulkit::emit_reports(result, cfg.out_dir, cfg.write_plots);
    std::cout << "reports written to " << cfg.out_dir.string() << '\n';
    return 0;
}

int cmd_generalize(const rulkit::ExperimentConfig& cfg) {
    auto runs = rulkit::load_dataset(cfg.dataset_root);
    std::vector<rulkit::BearingRun> train, test;
    for (auto& run : runs) {
        if (run.name.rfind("Bearing1", 0) == 0 && train.size() < 6)
            train.push_back(std::move(run));
        else if (run.name.rfind("Bearing2", 0) == 0 && test.size() < 4)
            test.push_back(std::move(run));
    }
    if (train.empty())
        throw rulkit::ConfigError("no condition-1 bearings (Bearing1_*) under dataset root");
    if (test.empty())
        throw rulkit::ConfigError("no condition-2 bearings (Bearing2_*) under dataset root");

    const auto gen = rulkit::run_generalization(train, test, cfg);
    rulkit::emit_reports(gen.evaluation, cfg.out_dir, cfg.write_plots);
    std::cout << "evaluated " << gen.evaluation.folds.size() << " condition-2 bearings; "
              << "checkpoints " << (gen.frozen ? "unchanged" : "MODIFIED") << " by inference\n";
    return gen.frozen ? 0 : 1;
}

int cmd_report(const rulkit::ExperimentConfig& cfg, const std::string& json_arg) {
    const fs::path source =
        json_arg.empty() ? cfg.out_dir / "fold_results.json" : fs::path(json_arg);
    const auto result = rulkit::load_results_json(source);
    rulkit::emit_reports(result, cfg.out_dir, cfg.write_plots);
    std::cout << "regenerated reports in " << cfg.out_dir.string() << " from " << source.string()
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rolling-bearing remaining-useful-life pipeline"};
    app.require_subcommand(1);

    std::string config_path, seed_list, out_dir, data_dir;
    app.add_option("--config", config_path, "experiment config file (key = value lines)");
    app.add_option("--seed", seed_list, "comma-separated seed list override");
    app.add_option("--out", out_dir, "output directory override");
    app.add_option("--data", data_dir, "dataset root override");

    auto* synth = app.add_subcommand("synth", "write a synthetic run-to-failure corpus");
    rulkit::CorpusSpec corpus_spec;
    synth->add_option("--bearings", corpus_spec.bearings, "bearings to generate");
    synth->add_option("--records", corpus_spec.records_per_bearing, "records per bearing");
    synth->add_option("--condition", corpus_spec.condition, "operating-condition tag");
    synth->add_option("--noise", corpus_spec.noise_std, "broadband noise level");
    synth->add_option("--growth", corpus_spec.growth, "end-of-life amplitude growth");
    synth->fallthrough();

    auto* ingest = app.add_subcommand("ingest-check", "parse a dataset and print run stats");
    std::string ingest_dir;
    ingest->add_option("dir", ingest_dir, "dataset root")->required();
    ingest->fallthrough();

    auto* features = app.add_subcommand("features", "extract per-record feature vectors");
    std::string features_dir;
    features->add_option("dir", features_dir, "dataset root")->required();
    features->fallthrough();

    auto* train_labels =
        app.add_subcommand("train-labels", "train label models and write label curves");
    std::string method_arg = "vqvae";
    train_labels->add_option("--method", method_arg, "label method");
    train_labels->fallthrough();

    auto* train_predict =
        app.add_subcommand("train-predict", "leave-one-bearing-out predictor training");
    std::string predict_method = "vqvae", fold_arg = "all";
    train_predict->add_option("--method", predict_method, "label method");
    train_predict->add_option("--fold", fold_arg, "fold index or 'all'");
    train_predict->fallthrough();

    auto* generalize =
        app.add_subcommand("generalize", "train on condition 1, evaluate on condition 2");
    std::string gen_method = "vqvae";
    generalize->add_option("--method", gen_method, "label method");
    generalize->fallthrough();

    auto* report = app.add_subcommand("report", "re-render reports from fold_results.json");
    std::string report_json;
    report->add_option("json", report_json, "persisted fold results (default <out>/fold_results.json)");
    report->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        rulkit::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = rulkit::load_config(config_path);
        if (!seed_list.empty()) cfg.seeds = rulkit::parse_seed_list(seed_list);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!data_dir.empty()) cfg.dataset_root = data_dir;

        if (app.got_subcommand(synth)) {
            corpus_spec.seed = cfg.seeds.front();
            return cmd_synth(cfg, corpus_spec);
        }
        if (app.got_subcommand(ingest)) return cmd_ingest_check(ingest_dir);
        if (app.got_subcommand(features)) return cmd_features(features_dir, cfg);
        if (app.got_subcommand(train_labels)) {
            cfg.method = rulkit::method_from_string(method_arg);
            return cmd_train_labels(cfg);
        }
        if (app.got_subcommand(train_predict)) {
            cfg.method = rulkit::method_from_string(predict_method);
            return cmd_train_predict(cfg, fold_arg);
        }
        if (app.got_subcommand(generalize)) {
            cfg.method = rulkit::method_from_string(gen_method);
            return cmd_generalize(cfg);
        }
        if (app.got_subcommand(report)) return cmd_report(cfg, report_json);
    } catch (const rulkit::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
