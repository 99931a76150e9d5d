// Microbenchmarks for the hot paths: convolution forward/backward, feature
// extraction, and one predictor training step.

#include <benchmark/benchmark.h>

#include <vector>

#include "rulkit/autodiff.hpp"
#include "rulkit/features.hpp"
#include "rulkit/ingest.hpp"
#include "rulkit/models.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tensor.hpp"

namespace {

rulkit::Tensor random_tensor(std::vector<std::size_t> shape, rulkit::Rng& rng) {
    rulkit::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
}

void BM_Conv1dForward(benchmark::State& state) {
    rulkit::Rng rng(1);
    const auto x = rulkit::ad::constant(random_tensor({8, 16, 256}, rng));
    const auto w = rulkit::ad::leaf(random_tensor({16, 16, 3}, rng));
    const auto b = rulkit::ad::leaf(random_tensor({16}, rng));
    for (auto _ : state) {
        auto y = rulkit::ad::conv1d(x, w, b, {.kernel = 3, .stride = 1, .dilation = 1, .pad_left = 1, .pad_right = 1});
        benchmark::DoNotOptimize(y->value.data());
    }
}
BENCHMARK(BM_Conv1dForward);

void BM_Conv1dTrainStep(benchmark::State& state) {
    rulkit::Rng rng(1);
    const auto x = rulkit::ad::constant(random_tensor({8, 16, 256}, rng));
    for (auto _ : state) {
        auto w = rulkit::ad::leaf(random_tensor({16, 16, 3}, rng));
        auto b = rulkit::ad::leaf(random_tensor({16}, rng));
        auto y = rulkit::ad::conv1d(x, w, b, {.kernel = 3, .stride = 1, .dilation = 1, .pad_left = 1, .pad_right = 1});
        auto loss = rulkit::ad::sum_squares(y);
        rulkit::ad::backward(loss);
        benchmark::DoNotOptimize(w->grad.data());
    }
}
BENCHMARK(BM_Conv1dTrainStep);

void BM_FeatureVector(benchmark::State& state) {
    rulkit::Rng rng(2);
    rulkit::VibrationRecord rec;
    rec.horizontal.resize(rulkit::kSamplesPerRecord);
    rec.vertical.resize(rulkit::kSamplesPerRecord);
    for (std::size_t i = 0; i < rulkit::kSamplesPerRecord; ++i) {
        rec.horizontal[i] = rng.normal();
        rec.vertical[i] = rng.normal();
    }
    for (auto _ : state) {
        auto f = rulkit::feature_vector(rec);
        benchmark::DoNotOptimize(f.data());
    }
}
BENCHMARK(BM_FeatureVector);

void BM_PredictorBatch(benchmark::State& state) {
    rulkit::Rng rng(3);
    std::vector<rulkit::VibrationRecord> samples;
    std::vector<double> targets;
    for (int i = 0; i < 32; ++i) {
        rulkit::VibrationRecord rec;
        rec.horizontal.resize(rulkit::kSamplesPerRecord);
        rec.vertical.resize(rulkit::kSamplesPerRecord);
        for (std::size_t j = 0; j < rulkit::kSamplesPerRecord; ++j) {
            rec.horizontal[j] = rng.normal();
            rec.vertical[j] = rng.normal();
        }
        samples.push_back(std::move(rec));
        targets.push_back(rng.uniform());
    }
    rulkit::AstcnModel model(15);
    model.bind_dataset(samples, targets);
    std::vector<std::size_t> indices(samples.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    for (auto _ : state) {
        rulkit::Rng step_rng(4);
        auto loss = model.batch_loss(indices, true, step_rng);
        rulkit::ad::backward(loss);
        benchmark::DoNotOptimize(loss->value.data());
    }
}
BENCHMARK(BM_PredictorBatch);

}  // namespace

BENCHMARK_MAIN();
