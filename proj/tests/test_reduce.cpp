#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "rulkit/errors.hpp"
#include "rulkit/reduce.hpp"
#include "rulkit/rng.hpp"

using namespace rulkit;

namespace {

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<std::vector<double>> X(n, std::vector<double>(d));
    for (auto& row : X)
        for (auto& v : row) v = rng.normal();
    return X;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("pca matches the closed-form 2x2 eigendecomposition") {
    for (int k = 0; k < 25; ++k) {
        Rng rng(600 + k);
        // anisotropic 2-D cloud with random rotation
        const double angle = rng.uniform(0.0, 3.14159);
        const double ca = std::cos(angle), sa = std::sin(angle);
        std::vector<std::vector<double>> X(400, std::vector<double>(2));
        for (auto& row : X) {
            const double u = 3.0 * rng.normal(), v = 0.7 * rng.normal();
            row[0] = ca * u - sa * v + 5.0;
            row[1] = sa * u + ca * v - 2.0;
        }
        // population covariance, computed directly
        double mx = 0.0, my = 0.0;
        for (const auto& r : X) {
            mx += r[0];
            my += r[1];
        }
        mx /= static_cast<double>(X.size());
        my /= static_cast<double>(X.size());
        double a = 0.0, b = 0.0, c = 0.0;
        for (const auto& r : X) {
            a += (r[0] - mx) * (r[0] - mx);
            b += (r[0] - mx) * (r[1] - my);
            c += (r[1] - my) * (r[1] - my);
        }
        a /= static_cast<double>(X.size());
        b /= static_cast<double>(X.size());
        c /= static_cast<double>(X.size());
        const double mid = 0.5 * (a + c);
        const double disc = std::sqrt(mid * mid - (a * c - b * b));
        const double l1 = mid + disc, l2 = mid - disc;
        std::vector<double> v1 = {b, l1 - a};
        const double n1 = std::sqrt(dot(v1, v1));
        v1[0] /= n1;
        v1[1] /= n1;

        const auto model = pca_fit(X);
        CHECK(model.mean[0] == doctest::Approx(mx).epsilon(1e-12));
        CHECK(model.variances[0] == doctest::Approx(l1).epsilon(1e-9));
        CHECK(model.variances[1] == doctest::Approx(l2).epsilon(1e-9));
        CHECK(std::fabs(dot(model.components[0], v1)) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("pca on points along a line recovers the direction") {
    Rng rng(11);
    std::vector<double> u = {0.6, -0.8, 0.0};  // unit direction
    std::vector<std::vector<double>> X;
    for (int i = 0; i < 200; ++i) {
        const double t = rng.normal();
        X.push_back({u[0] * t, u[1] * t, u[2] * t});
    }
    const auto model = pca_fit(X);
    CHECK(std::fabs(dot(model.components[0], u)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(model.variances[1] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(model.variances[2] == doctest::Approx(0.0).epsilon(1e-9));
    // sign rule: the largest-magnitude entry of each component is positive
    for (const auto& comp : model.components) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < comp.size(); ++j)
            if (std::fabs(comp[j]) > std::fabs(comp[arg])) arg = j;
        CHECK(comp[arg] > 0.0);
    }
}

TEST_CASE("pca components are orthonormal and variances preserve the trace") {
    Rng rng(12);
    const auto X = random_rows(300, 6, rng);
    const auto model = pca_fit(X);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            const double want = i == j ? 1.0 : 0.0;
            CHECK(dot(model.components[i], model.components[j]) ==
                  doctest::Approx(want).epsilon(1e-9));
        }
    CHECK(model.variances[0] >= model.variances[5]);

    // trace check: total variance equals the sum of per-feature variances
    double trace = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
        double mean = 0.0;
        for (const auto& r : X) mean += r[j];
        mean /= static_cast<double>(X.size());
        double var = 0.0;
        for (const auto& r : X) var += (r[j] - mean) * (r[j] - mean);
        trace += var / static_cast<double>(X.size());
    }
    double total = 0.0;
    for (double v : model.variances) total += v;
    CHECK(total == doctest::Approx(trace).epsilon(1e-9));
}

TEST_CASE("pca full projection reconstructs the input") {
    Rng rng(13);
    const auto X = random_rows(50, 5, rng);
    const auto model = pca_fit(X);
    for (const auto& row : X) {
        const auto back = pca_reconstruct(pca_project(row, model), model);
        for (std::size_t j = 0; j < row.size(); ++j)
            CHECK(back[j] == doctest::Approx(row[j]).epsilon(1e-9));
    }
    // projecting the mean gives the zero score vector
    const auto zero = pca_project(model.mean, model);
    for (double v : zero) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    // first-component helpers agree with the full projection
    CHECK(pca_project_first_row(X[0], model) == doctest::Approx(pca_project(X[0], model)[0]));
    const auto firsts = pca_project_first(X, model);
    CHECK(firsts.size() == X.size());
    CHECK(firsts[7] == doctest::Approx(pca_project(X[7], model)[0]));
}

TEST_CASE("pca on isotropic data spreads variance evenly") {
    Rng rng(14);
    const auto X = random_rows(20000, 3, rng);
    const auto model = pca_fit(X);
    for (double v : model.variances) CHECK(v == doctest::Approx(1.0).epsilon(0.06));
}

TEST_CASE("pca error contracts") {
    CHECK_THROWS_AS(pca_fit({}), NoDataError);
    CHECK_THROWS_AS(pca_fit({{1.0, 2.0}}), LengthError);
    CHECK_THROWS_AS(pca_fit({{1.0, 2.0}, {1.0}}), ShapeError);
    CHECK_THROWS_AS(pca_fit({{1.0, 2.0}, {1.0, 2.0}}), DegenerateDataError);
    Rng rng(15);
    const auto model = pca_fit(random_rows(10, 3, rng));
    CHECK_THROWS_AS(pca_project({1.0}, model), ShapeError);
    CHECK_THROWS_AS(pca_reconstruct({1.0}, model), ShapeError);
}

TEST_CASE("pca checkpoint round trip is exact") {
    Rng rng(16);
    const auto model = pca_fit(random_rows(40, 4, rng));
    const auto back = pca_from_checkpoint(to_checkpoint(model, 15));
    CHECK(back.mean == model.mean);
    CHECK(back.components == model.components);
    CHECK(back.variances == model.variances);

    Checkpoint wrong = to_checkpoint(model, 15);
    wrong.arch = "som";
    CHECK_THROWS_AS(pca_from_checkpoint(wrong), ConfigError);
}

TEST_CASE("som_bmu agrees with exhaustive search") {
    Rng rng(700);
    SomSpec spec;
    spec.width = 5;
    spec.height = 3;
    spec.epochs = 0;
    const auto data = random_rows(60, 4, rng);
    const auto grid = som_fit(data, spec);
    for (int q = 0; q < 50; ++q) {
        std::vector<double> x(4);
        for (auto& v : x) v = rng.normal();
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t i = 0; i < grid.nodes(); ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < grid.dim; ++j)
                d2 += (x[j] - grid.node(i)[j]) * (x[j] - grid.node(i)[j]);
            if (d2 < best_d) {
                best_d = d2;
                best = i;
            }
        }
        CHECK(som_bmu(x, grid) == best);
        CHECK(som_bmu_distance(x, grid) == doctest::Approx(std::sqrt(best_d)));
    }
}

TEST_CASE("som_init stays inside the per-dimension data range") {
    Rng rng(701);
    auto data = random_rows(100, 3, rng);
    for (auto& row : data) row[2] = 7.5;  // constant dimension
    SomSpec spec;
    const auto grid = som_init(spec, data);
    CHECK(grid.nodes() == 64);
    CHECK(grid.dim == 3);
    std::vector<double> lo(3, 1e300), hi(3, -1e300);
    for (const auto& row : data)
        for (std::size_t j = 0; j < 3; ++j) {
            lo[j] = std::min(lo[j], row[j]);
            hi[j] = std::max(hi[j], row[j]);
        }
    for (std::size_t i = 0; i < grid.nodes(); ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(grid.node(i)[j] >= lo[j]);
            CHECK(grid.node(i)[j] <= hi[j]);
        }
    for (std::size_t i = 0; i < grid.nodes(); ++i) CHECK(grid.node(i)[2] == 7.5);

    // zero training epochs: som_fit returns the untouched initialization
    SomSpec zero = spec;
    zero.epochs = 0;
    CHECK(som_fit(data, zero).weights == grid.weights);

    SomSpec bad = spec;
    bad.width = 0;
    CHECK_THROWS_AS(som_init(bad, data), ConfigError);
}

TEST_CASE("som training pulls nodes onto well-separated clusters") {
    Rng rng(702);
    const std::vector<std::vector<double>> centers = {
        {0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}, {10.0, 10.0}};
    std::vector<std::vector<double>> data;
    for (int i = 0; i < 200; ++i) {
        const auto& c = centers[static_cast<std::size_t>(i) % 4];
        data.push_back({c[0] + 0.3 * rng.normal(), c[1] + 0.3 * rng.normal()});
    }
    SomSpec spec;
    spec.width = 6;
    spec.height = 6;
    spec.epochs = 60;
    const auto grid = som_fit(data, spec);

    // every cluster center is closely quantized, by four distinct nodes
    std::vector<std::size_t> bmus;
    for (const auto& c : centers) {
        CHECK(som_bmu_distance(c, grid) < 1.0);
        bmus.push_back(som_bmu(c, grid));
    }
    for (std::size_t i = 0; i < bmus.size(); ++i)
        for (std::size_t j = i + 1; j < bmus.size(); ++j) CHECK(bmus[i] != bmus[j]);

    // training reduces the mean quantization error versus the raw init
    const auto init = som_init(spec, data);
    double err_init = 0.0, err_fit = 0.0;
    for (const auto& x : data) {
        err_init += som_bmu_distance(x, init);
        err_fit += som_bmu_distance(x, grid);
    }
    CHECK(err_fit < 0.5 * err_init);
}

TEST_CASE("som_fit is deterministic in the spec seed") {
    Rng rng(703);
    const auto data = random_rows(80, 5, rng);
    SomSpec spec;
    spec.width = 4;
    spec.height = 4;
    spec.epochs = 10;
    const auto a = som_fit(data, spec);
    const auto b = som_fit(data, spec);
    CHECK(a.weights == b.weights);
    SomSpec other = spec;
    other.seed = 16;
    CHECK(som_fit(data, other).weights != a.weights);
}

TEST_CASE("som checkpoint round trip is exact") {
    Rng rng(704);
    const auto data = random_rows(30, 3, rng);
    SomSpec spec;
    spec.width = 3;
    spec.height = 2;
    spec.epochs = 5;
    const auto grid = som_fit(data, spec);
    const auto back = som_from_checkpoint(to_checkpoint(grid, spec.seed));
    CHECK(back.width == grid.width);
    CHECK(back.height == grid.height);
    CHECK(back.dim == grid.dim);
    CHECK(back.weights == grid.weights);
}
