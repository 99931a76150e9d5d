#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rulkit/errors.hpp"
#include "rulkit/harness.hpp"
#include "rulkit/synth.hpp"

using namespace rulkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("rulkit_harness_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string read_text_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig smoke_config() {
    ExperimentConfig cfg;
    cfg.method = Method::linear;
    cfg.seeds = {15};
    cfg.mv_window = 5;
    // small batches: the tiny corpus needs several optimizer steps per epoch
    // for the rectified head to move off a bad initialization
    cfg.predictor_training.batch_size = 8;
    cfg.predictor_training.max_epochs = 10;
    cfg.predictor_training.patience = 10;
    return cfg;
}

const std::vector<BearingRun>& smoke_corpus() {
    static const std::vector<BearingRun> corpus = [] {
        CorpusSpec spec;
        spec.bearings = 7;
        spec.records_per_bearing = 10;
        return make_corpus(spec);
    }();
    return corpus;
}

// one shared training run; determinism gets its own second run
const ExperimentResult& smoke_result() {
    static const ExperimentResult result = run_experiment(smoke_corpus(), smoke_config());
    return result;
}

bool metrics_close(const MetricReport& a, const MetricReport& b) {
    const auto same = [](double x, double y) {
        if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
        return x == y;
    };
    return same(a.rmse, b.rmse) && same(a.mae, b.mae) && same(a.score, b.score) &&
           same(a.monotonicity, b.monotonicity) && same(a.trendiness, b.trendiness) &&
           same(a.mad, b.mad) && same(a.mv, b.mv);
}

}  // namespace

TEST_CASE("config file round trip covers every key family") {
    TempDir tmp;
    const fs::path file = tmp.path / "exp.cfg";
    write_text_file(file,
                    "# experiment configuration\n"
                    "dataset_root = /data/runs\n"
                    "out_dir = results   # trailing comment\n"
                    "method = f_vqvae\n"
                    "\n"
                    "seeds = 15, 16,25\n"
                    "mv_window = 11\n"
                    "write_plots = false\n"
                    "label_training.lr = 0.002\n"
                    "label_training.batch_size = 64\n"
                    "label_training.max_epochs = 40\n"
                    "label_training.patience = 7\n"
                    "label_training.weight_decay = 0.0001\n"
                    "label_training.val_fraction = 0.2\n"
                    "predictor_training.max_epochs = 25\n"
                    "smoother.window = 9\n"
                    "smoother.polynomial_order = 2\n"
                    "smoother.boundary = mirror\n"
                    "features.crop_len = 512\n"
                    "features.sample_rate = 12800\n"
                    "features.wavelet = db4\n"
                    "fpt.max_baseline = 100\n"
                    "fpt.baseline_fraction = 0.1\n"
                    "fpt.sigma = 2.5\n"
                    "fpt.consecutive = 3\n");
    const ExperimentConfig cfg = load_config(file);
    CHECK(cfg.dataset_root == fs::path("/data/runs"));
    CHECK(cfg.out_dir == fs::path("results"));
    CHECK(cfg.method == Method::f_vqvae);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{15, 16, 25});
    CHECK(cfg.mv_window == 11);
    CHECK_FALSE(cfg.write_plots);
    CHECK(cfg.label_training.lr == 0.002);
    CHECK(cfg.label_training.batch_size == 64);
    CHECK(cfg.label_training.max_epochs == 40);
    CHECK(cfg.label_training.patience == 7);
    CHECK(cfg.label_training.weight_decay == 0.0001);
    CHECK(cfg.label_training.val_fraction == 0.2);
    CHECK(cfg.predictor_training.max_epochs == 25);
    CHECK(cfg.smoother.window == 9);
    CHECK(cfg.smoother.polynomial_order == 2);
    CHECK(cfg.smoother.boundary == SgBoundary::mirror);
    CHECK(cfg.features.crop_len == 512);
    CHECK(cfg.features.sample_rate == 12800.0);
    CHECK(cfg.features.wavelet == Wavelet::db4);
    CHECK(cfg.fpt.max_baseline == 100);
    CHECK(cfg.fpt.baseline_fraction == 0.1);
    CHECK(cfg.fpt.sigma == 2.5);
    CHECK(cfg.fpt.consecutive == 3);
}

TEST_CASE("config parser rejects malformed input") {
    TempDir tmp;
    const auto expect_throw = [&](const std::string& text) {
        const fs::path file = tmp.path / "bad.cfg";
        write_text_file(file, text);
        CHECK_THROWS_AS(load_config(file), ConfigError);
    };
    expect_throw("mystery = 1\n");
    expect_throw("method = bogus\n");
    expect_throw("mv_window = 0\n");
    expect_throw("mv_window = eleven\n");
    expect_throw("label_training.lr = fast\n");
    expect_throw("label_training.unknown = 1\n");
    expect_throw("write_plots = maybe\n");
    expect_throw("smoother.boundary = wrap\n");
    expect_throw("features.wavelet = sym8\n");
    expect_throw("seeds = \n");
    expect_throw("seeds = 15,abc\n");

    const fs::path file = tmp.path / "line.cfg";
    write_text_file(file, "method = linear\njust a line without equals\n");
    CHECK_THROWS_WITH_AS(load_config(file), "config line 2: expected key = value", ConfigError);

    CHECK_THROWS_AS(load_config(tmp.path / "missing.cfg"), IoError);
}

TEST_CASE("seed list parsing") {
    CHECK(parse_seed_list("15") == std::vector<std::uint64_t>{15});
    CHECK(parse_seed_list(" 15 , 16 ,25, ") == std::vector<std::uint64_t>{15, 16, 25});
    CHECK_THROWS_AS(parse_seed_list(""), ConfigError);
    CHECK_THROWS_AS(parse_seed_list("a,b"), ConfigError);
}

TEST_CASE("window clamping") {
    CHECK(clamp_window(21, 100) == 21);
    CHECK(clamp_window(21, 10) == 9);    // even -> step down to odd
    CHECK(clamp_window(21, 11) == 11);
    CHECK(clamp_window(4, 100) == 3);
    CHECK(clamp_window(1, 5) == 1);
    CHECK(clamp_window(21, 0) == 1);
    CHECK(clamp_window(21, 1) == 1);

    SmootherConfig s;
    s.window = 21;
    s.polynomial_order = 3;
    const SmootherConfig c = clamp_smoother(s, 4);
    CHECK(c.window == 3);
    CHECK(c.polynomial_order == 2);  // order must stay below the window
    const SmootherConfig wide = clamp_smoother(s, 200);
    CHECK(wide.window == 21);
    CHECK(wide.polynomial_order == 3);
}

TEST_CASE("leave-one-out folds partition exactly seven runs") {
    const auto folds = make_folds(7);
    REQUIRE(folds.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(folds[i].test_index == i);
        REQUIRE(folds[i].train_indices.size() == 6);
        std::vector<bool> seen(7, false);
        seen[folds[i].test_index] = true;
        for (const std::size_t j : folds[i].train_indices) {
            CHECK_FALSE(seen[j]);
            seen[j] = true;
        }
        CHECK(std::count(seen.begin(), seen.end(), true) == 7);
    }
    CHECK_THROWS_AS(make_folds(6), ConfigError);
    CHECK_THROWS_AS(make_folds(8), ConfigError);
}

TEST_CASE("averaging skips failed seeds and goes NaN when none survive") {
    SeedOutcome a, b, failed;
    a.metrics.rmse = 0.1;
    a.metrics.mae = 0.2;
    a.metrics.score = 0.3;
    a.metrics.monotonicity = 0.4;
    a.metrics.trendiness = -0.5;
    a.metrics.mad = 0.6;
    a.metrics.mv = 0.7;
    b.metrics.rmse = 0.3;
    b.metrics.mae = 0.4;
    b.metrics.score = 0.5;
    b.metrics.monotonicity = 0.6;
    b.metrics.trendiness = -0.7;
    b.metrics.mad = 0.8;
    b.metrics.mv = 0.9;
    failed.failed = true;
    failed.metrics.rmse = 999.0;  // must not leak into the average

    const MetricReport avg = average_outcomes({a, b, failed}, 21);
    CHECK(avg.rmse == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(avg.mae == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(avg.score == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(avg.monotonicity == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(avg.trendiness == doctest::Approx(-0.6).epsilon(1e-12));
    CHECK(avg.mad == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(avg.mv == doctest::Approx(0.8).epsilon(1e-12));

    const MetricReport none = average_outcomes({failed}, 21);
    CHECK(std::isnan(none.rmse));
    CHECK(std::isnan(none.mv));
}

TEST_CASE("training membership hash is order-free and excludes the test run") {
    const auto& runs = smoke_corpus();
    const std::uint64_t h1 = training_membership_hash(runs, {1, 2, 3, 4, 5, 6});
    const std::uint64_t h2 = training_membership_hash(runs, {6, 5, 4, 3, 2, 1});
    CHECK(h1 == h2);
    const std::uint64_t other = training_membership_hash(runs, {0, 2, 3, 4, 5, 6});
    CHECK(h1 != other);

    // fold hashes differ pairwise: each excludes a different bearing
    const auto folds = make_folds(runs.size());
    std::vector<std::uint64_t> hashes;
    for (const auto& fold : folds)
        hashes.push_back(training_membership_hash(runs, fold.train_indices));
    for (std::size_t i = 0; i < hashes.size(); ++i)
        for (std::size_t j = i + 1; j < hashes.size(); ++j) CHECK(hashes[i] != hashes[j]);
}

TEST_CASE("dataset loader reads a written corpus in sorted order") {
    TempDir tmp;
    CorpusSpec spec;
    spec.bearings = 3;
    spec.records_per_bearing = 2;
    write_corpus(tmp.path, make_corpus(spec));
    const auto runs = load_dataset(tmp.path);
    REQUIRE(runs.size() == 3);
    CHECK(runs[0].name == "Bearing1_1");
    CHECK(runs[1].name == "Bearing1_2");
    CHECK(runs[2].name == "Bearing1_3");
    CHECK(runs[0].records.size() == 2);
    CHECK(runs[0].records[0].horizontal.size() == kSamplesPerRecord);

    TempDir empty;
    CHECK_THROWS_AS(load_dataset(empty.path), NoDataError);
    CHECK_THROWS_AS(load_dataset(tmp.path / "Bearing1_1" / "acc_00001.csv"), IoError);
}

TEST_CASE("experiment smoke run: structure, labels, and determinism") {
    const auto& runs = smoke_corpus();
    const ExperimentResult& result = smoke_result();
    CHECK(result.method == Method::linear);
    CHECK(result.mv_window == 5);
    REQUIRE(result.folds.size() == 7);
    for (std::size_t f = 0; f < 7; ++f) {
        const FoldResult& fold = result.folds[f];
        CHECK(fold.bearing == runs[f].name);
        CHECK(fold.test_index == f);
        CHECK(fold.surviving == 1);
        REQUIRE(fold.seeds.size() == 1);
        const SeedOutcome& so = fold.seeds[0];
        CHECK(so.seed == 15);
        CHECK_FALSE(so.failed);
        CHECK(so.label == linear_labels(runs[f].records.size()).values);
        CHECK(so.prediction.size() == runs[f].records.size());
        for (const double p : so.prediction) CHECK(std::isfinite(p));
        CHECK(std::isfinite(so.metrics.rmse));
        CHECK(std::isfinite(so.metrics.score));

        const auto folds = make_folds(runs.size());
        CHECK(so.train_hash == training_membership_hash(runs, folds[f].train_indices));
        CHECK(metrics_close(fold.averaged, so.metrics));  // single-seed average
    }

    // a second run from the same inputs must be byte-identical
    const ExperimentResult again = run_experiment(runs, smoke_config());
    CHECK(render_summary_csv(result) == render_summary_csv(again));
    CHECK(render_summary_csv(result, 100.0) == render_summary_csv(again, 100.0));
}

TEST_CASE("summary CSV shape and score scaling") {
    const ExperimentResult& result = smoke_result();

    const std::string csv = render_summary_csv(result);
    std::stringstream ss(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(ss, line)) lines.push_back(line);
    REQUIRE(lines.size() == 1 + 7 * 2);  // header + (seed row + avg row) per bearing
    CHECK(lines[0] == "method,bearing,seed,rmse,mae,score,mon,tend,mad,mv");
    CHECK(lines[1].rfind("linear,Bearing1_1,15,", 0) == 0);
    CHECK(lines[2].rfind("linear,Bearing1_1,avg,", 0) == 0);

    // the x100 variant recomputes the score on scaled curves, everything else
    // stays put
    const std::string csv100 = render_summary_csv(result, 100.0);
    std::stringstream s100(csv100);
    std::vector<std::string> lines100;
    while (std::getline(s100, line)) lines100.push_back(line);
    REQUIRE(lines100.size() == lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cut = [](const std::string& s) {
            // drop field 5 (score): find the 5th and 6th commas
            std::size_t pos = 0;
            for (int c = 0; c < 5; ++c) pos = s.find(',', pos) + 1;
            const std::size_t end = s.find(',', pos);
            return s.substr(0, pos) + s.substr(end + 1);
        };
        CHECK(cut(lines[i]) == cut(lines100[i]));
    }
}

TEST_CASE("reports directory and byte-exact regeneration from the JSON") {
    const ExperimentResult& result = smoke_result();

    TempDir out_a;
    emit_reports(result, out_a.path, true);
    CHECK(fs::exists(out_a.path / "summary.csv"));
    CHECK(fs::exists(out_a.path / "summary_score100.csv"));
    CHECK(fs::exists(out_a.path / "fold_results.json"));
    for (const auto& fold : result.folds) {
        CHECK(fs::exists(out_a.path / ("curve_linear_" + fold.bearing + ".csv")));
        CHECK(fs::exists(out_a.path / ("plot_linear_" + fold.bearing + ".svg")));
    }
    const std::string svg = read_text_file(out_a.path / "plot_linear_Bearing1_1.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);

    // round trip through the JSON, then regenerate: everything byte-identical
    const ExperimentResult loaded = load_results_json(out_a.path / "fold_results.json");
    TempDir out_b;
    emit_reports(loaded, out_b.path, true);
    for (const char* name : {"summary.csv", "summary_score100.csv", "fold_results.json",
                             "curve_linear_Bearing1_4.csv", "plot_linear_Bearing1_4.svg"}) {
        CHECK(read_text_file(out_a.path / name) == read_text_file(out_b.path / name));
    }

    ExperimentResult hollow;
    CHECK_THROWS_AS(emit_reports(hollow, out_b.path, false), ConfigError);
}

TEST_CASE("results JSON preserves every field") {
    const ExperimentResult& result = smoke_result();

    TempDir tmp;
    save_results_json(result, tmp.path / "r.json");
    const ExperimentResult loaded = load_results_json(tmp.path / "r.json");
    CHECK(loaded.method == result.method);
    CHECK(loaded.mv_window == result.mv_window);
    REQUIRE(loaded.folds.size() == result.folds.size());
    for (std::size_t f = 0; f < result.folds.size(); ++f) {
        const FoldResult& want = result.folds[f];
        const FoldResult& got = loaded.folds[f];
        CHECK(got.bearing == want.bearing);
        CHECK(got.test_index == want.test_index);
        CHECK(got.surviving == want.surviving);
        CHECK(metrics_close(got.averaged, want.averaged));
        REQUIRE(got.seeds.size() == want.seeds.size());
        for (std::size_t s = 0; s < want.seeds.size(); ++s) {
            CHECK(got.seeds[s].seed == want.seeds[s].seed);
            CHECK(got.seeds[s].failed == want.seeds[s].failed);
            CHECK(got.seeds[s].train_hash == want.seeds[s].train_hash);
            CHECK(got.seeds[s].label == want.seeds[s].label);
            CHECK(got.seeds[s].prediction == want.seeds[s].prediction);
            CHECK(metrics_close(got.seeds[s].metrics, want.seeds[s].metrics));
        }
    }
    CHECK_THROWS_AS(load_results_json(tmp.path / "absent.json"), IoError);
}

TEST_CASE("generalization run keeps checkpoints frozen during inference") {
    const auto& train_runs = smoke_corpus();
    CorpusSpec test_spec;
    test_spec.bearings = 2;
    test_spec.records_per_bearing = 10;
    test_spec.condition = 3;
    test_spec.seed = 77;
    const auto test_runs = make_corpus(test_spec);

    TempDir out;
    ExperimentConfig cfg = smoke_config();
    cfg.out_dir = out.path;
    const GeneralizationResult gen = run_generalization(train_runs, test_runs, cfg);
    CHECK(gen.frozen);
    CHECK(gen.hash_before == gen.hash_after);
    REQUIRE(gen.evaluation.folds.size() == 2);
    CHECK(gen.evaluation.folds[0].bearing == "Bearing3_1");
    CHECK(gen.evaluation.folds[1].bearing == "Bearing3_2");
    CHECK(fs::exists(out.path / "predictor_linear_seed15.ckpt"));
    for (const auto& fold : gen.evaluation.folds) {
        REQUIRE(fold.seeds.size() == 1);
        CHECK_FALSE(fold.seeds[0].failed);
        CHECK(fold.seeds[0].prediction.size() == 10);
        // both test folds share the full training membership
        CHECK(fold.seeds[0].train_hash == gen.evaluation.folds[0].seeds[0].train_hash);
    }

    CHECK_THROWS_AS(run_generalization({}, test_runs, cfg), ConfigError);
    CHECK_THROWS_AS(run_generalization(train_runs, {}, cfg), ConfigError);
}
