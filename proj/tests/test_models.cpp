#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "rulkit/checkpoint.hpp"
#include "rulkit/errors.hpp"
#include "rulkit/models.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/train.hpp"

using namespace rulkit;
namespace fs = std::filesystem;

namespace {

std::vector<double> random_window(std::size_t n, Rng& rng) {
    std::vector<double> w(n);
    for (auto& v : w) v = rng.normal();
    return w;
}

VibrationRecord random_record(Rng& rng) {
    VibrationRecord rec;
    rec.horizontal.resize(kSamplesPerRecord);
    rec.vertical.resize(kSamplesPerRecord);
    for (auto& v : rec.horizontal) v = rng.normal();
    for (auto& v : rec.vertical) v = rng.normal();
    return rec;
}

fs::path temp_file(const char* tag) {
    return fs::temp_directory_path() /
           (std::string("rulkit_model_") + tag + "_" + std::to_string(::getpid()));
}

}  // namespace

TEST_CASE("vq_quantize matches exhaustive search and breaks ties low") {
    Rng rng(50);
    Codebook book(16, 3, rng);
    for (int q = 0; q < 100; ++q) {
        std::vector<std::vector<double>> z = {random_window(3, rng)};
        const auto got = vq_quantize(z, book);
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t k = 0; k < book.codes(); ++k) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < 3; ++j) {
                const double d = z[0][j] - book.embeddings->value[k * 3 + j];
                d2 += d * d;
            }
            if (d2 < best_d) {
                best_d = d2;
                best = k;
            }
        }
        CHECK(got.indices[0] == static_cast<int>(best));
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(got.z_q[0][j] == book.embeddings->value[best * 3 + j]);
    }

    // two identical codes: the assignment picks the lower index
    Codebook dup(3, 2, rng);
    dup.embeddings->value = Tensor({3, 2}, {5.0, 5.0, 1.0, 1.0, 1.0, 1.0});
    const auto tie = vq_quantize({{1.0, 1.0}}, dup);
    CHECK(tie.indices[0] == 1);
}

TEST_CASE("vq_quantize validates dimensions") {
    Rng rng(51);
    Codebook book(4, 3, rng);
    CHECK_THROWS_AS(vq_quantize({{1.0, 2.0}}, book), ShapeError);
    CHECK_THROWS_AS(Codebook(0, 3, rng), ConfigError);
}

TEST_CASE("vqvae_loss_value hand-computed oracle") {
    // recon = ((1-0)^2 + (2-4)^2)/2 = 2.5; penalty = (1-0)^2 + 0 = 1
    const double loss = vqvae_loss_value({1.0, 2.0}, {0.0, 4.0}, {1.0, 0.0}, {0.0, 0.0}, 0.25);
    CHECK(loss == doctest::Approx(2.5 + 1.0 + 0.25 * 1.0).epsilon(1e-12));
    CHECK_THROWS_AS(vqvae_loss_value({1.0}, {1.0, 2.0}, {0.0}, {0.0}, 0.25), ShapeError);
}

TEST_CASE("codebook usage counters and perplexity") {
    Rng rng(52);
    Codebook book(4, 2, rng);
    CHECK(book.perplexity() == 0.0);  // nothing observed yet
    book.observe({0, 1, 2, 3});
    CHECK(book.perplexity() == doctest::Approx(4.0).epsilon(1e-12));  // uniform -> K
    book.reset_usage();
    book.observe({2, 2, 2, 2});
    CHECK(book.perplexity() == doctest::Approx(1.0).epsilon(1e-12));  // collapsed -> 1
}

TEST_CASE("adaptive threshold stays within [0, mean |x|] per channel") {
    Rng rng(53);
    AsModule as(3, rng);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor xv({2, 3, 7});
        for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = rng.normal();
        auto x = ad::leaf(xv);
        for (bool train : {true, false}) {
            auto tau = as.threshold(x, train);
            REQUIRE(tau->value.shape() == std::vector<std::size_t>{2, 3});
            for (std::size_t n = 0; n < 2; ++n)
                for (std::size_t c = 0; c < 3; ++c) {
                    double gap = 0.0;
                    for (std::size_t t = 0; t < 7; ++t)
                        gap += std::fabs(xv[(n * 3 + c) * 7 + t]);
                    gap /= 7.0;
                    const double v = tau->value[n * 3 + c];
                    CHECK(v >= 0.0);
                    CHECK(v <= gap);
                }
        }
    }
}

TEST_CASE("adaptive threshold closed form without batch norm") {
    Rng rng(54);
    AsModule as(2, rng, false);
    // identity-by-channel gate: W = diag(w), b = 0
    as.dense().weight()->value = Tensor({2, 2}, {0.7, 0.0, 0.0, -1.3});
    as.dense().bias()->value = Tensor({2}, {0.0, 0.0});
    Tensor xv({1, 2, 4});
    const double a = 1.5, b = 2.0;  // constant magnitude per channel
    for (std::size_t t = 0; t < 4; ++t) {
        xv[t] = (t % 2 == 0) ? a : -a;
        xv[4 + t] = b;
    }
    auto tau = as.threshold(ad::leaf(xv), false);
    const auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    CHECK(tau->value[0] == doctest::Approx(a * sigmoid(0.7 * a)).epsilon(1e-12));
    CHECK(tau->value[1] == doctest::Approx(b * sigmoid(-1.3 * b)).epsilon(1e-12));
}

TEST_CASE("causal conv wrapper never looks ahead, at any dilation") {
    Rng rng(55);
    for (std::size_t dilation : {1UL, 2UL, 4UL}) {
        Conv1dLayer conv(2, 3, 3, Padding::causal, rng, 1, dilation);
        CHECK(conv.out_len(16) == 16);
        Tensor xv({1, 2, 16});
        for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = rng.normal();
        auto y0 = conv.forward(ad::leaf(xv));
        const std::size_t t = 9;
        xv[t] += 3.0;       // channel 0, time t
        xv[16 + t] -= 2.0;  // channel 1, time t
        auto y1 = conv.forward(ad::leaf(xv));
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < t; ++i)
                CHECK(y0->value[c * 16 + i] == y1->value[c * 16 + i]);
        double moved = 0.0;
        for (std::size_t c = 0; c < 3; ++c)
            moved += std::fabs(y0->value[c * 16 + t] - y1->value[c * 16 + t]);
        CHECK(moved > 1e-6);
    }
}

TEST_CASE("residual block keeps length, maps channels, and is deterministic in eval") {
    Rng rng(66);
    AstcnBlock block(2, 3, 3, 2, 0.2, 0.0, rng);
    Tensor xv({2, 2, 16});
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = rng.normal();
    Rng fwd1(1), fwd2(99);
    auto y1 = block.forward(ad::leaf(xv), false, fwd1);
    auto y2 = block.forward(ad::leaf(xv), false, fwd2);
    REQUIRE(y1->value.shape() == std::vector<std::size_t>{2, 3, 16});
    CHECK(y1->value.values() == y2->value.values());  // eval ignores the rng
}

TEST_CASE("predictor: parameter count, output shape, nonnegativity") {
    AstcnModel model(15);
    CHECK(model.parameter_count() == 2585);
    Rng rng(56);
    Tensor x({3, 2, kSamplesPerRecord});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    Rng fwd(1);
    auto y = model.forward(ad::leaf(x), false, fwd);
    REQUIRE(y->value.shape() == std::vector<std::size_t>{3, 1});
    bool any_positive = false;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(y->value[i] >= 0.0);  // final ReLU
        any_positive = any_positive || y->value[i] > 0.0;
    }
    CHECK(any_positive);  // fresh model starts live, not in the dead zone
}

TEST_CASE("predictor batches do not change per-record predictions") {
    AstcnModel model(15);
    Rng rng(57);
    std::vector<VibrationRecord> records;
    for (int i = 0; i < 34; ++i) records.push_back(random_record(rng));  // crosses chunking
    const auto batched = model.predict(records);
    REQUIRE(batched.size() == records.size());
    for (std::size_t i = 0; i < records.size(); i += 7) {
        const double single = model.predict(records[i]);
        CHECK(single == doctest::Approx(batched[i]).epsilon(1e-12));
    }
}

TEST_CASE("predictor checkpoint round trip preserves predictions bitwise") {
    AstcnModel model(15);
    Rng rng(58);
    const auto rec = random_record(rng);
    const double before = model.predict(rec);

    const Checkpoint ckpt = model.checkpoint();
    CHECK(ckpt.arch == "astcn");
    AstcnModel back = AstcnModel::from_checkpoint(ckpt);
    CHECK(back.predict(rec) == before);

    const fs::path path = temp_file("astcn");
    save_checkpoint(path, ckpt);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.arch == ckpt.arch);
    CHECK(loaded.seed == ckpt.seed);
    REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
        const auto& other = loaded.tensors.at(name);
        REQUIRE(other.shape() == tensor.shape());
        CHECK(other.values() == tensor.values());  // bit-for-bit
    }
    CHECK(AstcnModel::from_checkpoint(loaded).predict(rec) == before);

    // identical re-save -> identical bytes
    const fs::path path2 = temp_file("astcn2");
    save_checkpoint(path2, ckpt);
    CHECK(fnv1a_file(path) == fnv1a_file(path2));
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("autoencoder latent sizes and reconstruction shapes") {
    AeModel raw(InputKind::raw, 15);
    CHECK(raw.input_len() == 1024);
    CHECK(raw.latent_len() == 32);
    CHECK(raw.arch() == "ae-raw");
    AeModel feat(InputKind::feature, 15);
    CHECK(feat.input_len() == 38);
    CHECK(feat.latent_len() == 9);
    CHECK(feat.arch() == "ae-feat");

    Rng rng(59);
    const auto wr = random_window(1024, rng);
    CHECK(raw.encode_latent(wr).size() == 32);
    CHECK(raw.reconstruct(wr).size() == 1024);
    const auto wf = random_window(38, rng);
    CHECK(feat.encode_latent(wf).size() == 9);
    CHECK(feat.reconstruct(wf).size() == 38);
}

TEST_CASE("vq-vae latent geometry and quantization residual") {
    VqVaeModel raw(InputKind::raw, 15);
    CHECK(raw.input_len() == 1024);
    CHECK(raw.latent_positions() == 32);
    CHECK(raw.latent_dim() == 16);
    CHECK(raw.codebook().codes() == 32);
    CHECK(raw.arch() == "vqvae-raw");
    VqVaeModel feat(InputKind::feature, 15);
    CHECK(feat.input_len() == 38);
    CHECK(feat.latent_positions() == 9);
    CHECK(feat.latent_dim() == 4);
    CHECK(feat.arch() == "vqvae-feat");
    CHECK(feat.beta() == 0.25);

    Rng rng(60);
    const auto w = random_window(38, rng);
    CHECK(feat.encode_latent(w).size() == 9 * 4);
    CHECK(feat.reconstruct(w).size() == 38);
    const double resid = feat.quantization_residual(w);
    CHECK(resid >= 0.0);
    CHECK(std::isfinite(resid));

    // residual is the L2 distance between the latent and its snapped copy
    const auto flat = feat.encode_latent(w);
    std::vector<std::vector<double>> rows(9);
    for (std::size_t p = 0; p < 9; ++p)
        rows[p].assign(flat.begin() + static_cast<std::ptrdiff_t>(p * 4),
                       flat.begin() + static_cast<std::ptrdiff_t>((p + 1) * 4));
    const auto assign = vq_quantize(rows, feat.codebook());
    double sq = 0.0;
    for (std::size_t p = 0; p < 9; ++p)
        for (std::size_t d = 0; d < 4; ++d) sq += std::pow(rows[p][d] - assign.z_q[p][d], 2);
    CHECK(resid == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
}

TEST_CASE("vq-vae batch loss equals the value-level objective for one window") {
    VqVaeModel model(InputKind::feature, 15);
    Rng rng(61);
    std::vector<std::vector<double>> windows = {random_window(38, rng)};
    model.bind_dataset(windows);
    Rng fwd(1);
    const double loss = model.batch_loss({0}, false, fwd)->value[0];

    const auto flat = model.encode_latent(windows[0]);
    std::vector<std::vector<double>> rows(model.latent_positions());
    const std::size_t d = model.latent_dim();
    for (std::size_t p = 0; p < rows.size(); ++p)
        rows[p].assign(flat.begin() + static_cast<std::ptrdiff_t>(p * d),
                       flat.begin() + static_cast<std::ptrdiff_t>((p + 1) * d));
    const auto assign = vq_quantize(rows, model.codebook());
    std::vector<double> zq_flat;
    for (const auto& row : assign.z_q) zq_flat.insert(zq_flat.end(), row.begin(), row.end());
    const double want = vqvae_loss_value(windows[0], model.reconstruct(windows[0]), flat,
                                         zq_flat, model.beta());
    CHECK(loss == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("autoencoder fit reduces reconstruction loss") {
    Rng rng(62);
    std::vector<std::vector<double>> windows;
    for (int i = 0; i < 24; ++i) {
        // structured inputs: two modes plus small noise
        std::vector<double> w(38);
        const double phase = rng.uniform(0.0, 6.28);
        for (std::size_t j = 0; j < 38; ++j)
            w[j] = std::sin(0.3 * static_cast<double>(j) + phase) + 0.05 * rng.normal();
        windows.push_back(std::move(w));
    }
    AeModel model(InputKind::feature, 15);
    model.bind_dataset(windows);
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.batch_size = 8;
    tc.max_epochs = 12;
    tc.patience = 12;
    tc.val_fraction = 0.0;
    const auto hist = fit(model, tc);
    CHECK(hist.train_loss.back() < hist.train_loss.front());
}

TEST_CASE("vq-vae fit reduces loss and exercises the codebook") {
    Rng rng(63);
    std::vector<std::vector<double>> windows;
    for (int i = 0; i < 24; ++i) {
        std::vector<double> w(38);
        const double phase = rng.uniform(0.0, 6.28);
        for (std::size_t j = 0; j < 38; ++j)
            w[j] = std::cos(0.4 * static_cast<double>(j) + phase) + 0.05 * rng.normal();
        windows.push_back(std::move(w));
    }
    VqVaeModel model(InputKind::feature, 15);
    model.bind_dataset(windows);
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.batch_size = 8;
    tc.max_epochs = 12;
    tc.patience = 12;
    tc.val_fraction = 0.0;
    const auto hist = fit(model, tc);
    CHECK(hist.train_loss.back() < hist.train_loss.front());
    CHECK(model.codebook().perplexity() > 1.0);  // training observed assignments
    CHECK(model.codebook_perplexity(windows) >= 1.0);
}

TEST_CASE("codec checkpoints restore forward passes bitwise") {
    Rng rng(64);
    const auto w = random_window(38, rng);

    AeModel ae(InputKind::feature, 15);
    const auto ae_lat = ae.encode_latent(w);
    AeModel ae_back = AeModel::from_checkpoint(ae.checkpoint());
    CHECK(ae_back.encode_latent(w) == ae_lat);
    CHECK(ae_back.reconstruct(w) == ae.reconstruct(w));

    VqVaeModel vq(InputKind::feature, 15);
    const auto vq_lat = vq.encode_latent(w);
    VqVaeModel vq_back = VqVaeModel::from_checkpoint(vq.checkpoint());
    CHECK(vq_back.encode_latent(w) == vq_lat);
    CHECK(vq_back.reconstruct(w) == vq.reconstruct(w));
    CHECK(vq_back.quantization_residual(w) == vq.quantization_residual(w));

    Checkpoint wrong = ae.checkpoint();
    wrong.arch = "astcn";
    CHECK_THROWS_AS(AeModel::from_checkpoint(wrong), ConfigError);
}

TEST_CASE("bind_dataset validates its input") {
    AeModel ae(InputKind::feature, 15);
    CHECK_THROWS_AS(ae.bind_dataset({{1.0, 2.0}}), ShapeError);
    AstcnModel astcn(15);
    Rng rng(65);
    CHECK_THROWS_AS(astcn.bind_dataset({random_record(rng)}, {0.1, 0.2}), ShapeError);
    VibrationRecord bad;
    bad.horizontal.assign(100, 0.0);
    bad.vertical.assign(100, 0.0);
    CHECK_THROWS_AS(astcn.bind_dataset({bad}, {0.1}), ShapeError);
}

TEST_CASE("checkpoint io rejects unknown architectures and bad files") {
    CHECK(is_known_arch("ae-raw"));
    CHECK(is_known_arch("vqvae-feat"));
    CHECK(is_known_arch("astcn"));
    CHECK(is_known_arch("pca"));
    CHECK(is_known_arch("som"));
    CHECK_FALSE(is_known_arch("transformer"));

    Checkpoint bad;
    bad.arch = "transformer";
    const fs::path path = temp_file("bad");
    CHECK_THROWS_AS(save_checkpoint(path, bad), ConfigError);
    CHECK_THROWS_AS(load_checkpoint(path / "missing"), IoError);

    std::ofstream(path) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
    fs::remove(path);
}
