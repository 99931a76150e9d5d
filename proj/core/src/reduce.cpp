#include "rulkit/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

void check_rows(const std::vector<std::vector<double>>& X) {
    if (X.empty()) throw NoDataError("empty row matrix");
    const std::size_t d = X[0].size();
    if (d == 0) throw ShapeError("zero-width row matrix");
    for (const auto& row : X)
        if (row.size() != d) throw ShapeError("ragged row matrix");
}

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

}  // namespace

PcaModel pca_fit(const std::vector<std::vector<double>>& X) {
    check_rows(X);
    const std::size_t n = X.size();
    const std::size_t d = X[0].size();
    if (n < 2) throw LengthError("pca_fit: need at least 2 rows");

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (const auto& row : X)
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += row[j];
    for (double& m : model.mean) m /= static_cast<double>(n);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                                static_cast<Eigen::Index>(d));
    Eigen::VectorXd centered(static_cast<Eigen::Index>(d));
    for (const auto& row : X) {
        for (std::size_t j = 0; j < d; ++j)
            centered(static_cast<Eigen::Index>(j)) = row[j] - model.mean[j];
        cov.noalias() += centered * centered.transpose();
    }
    cov /= static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw DegenerateDataError("pca_fit: eigensolver failed");
    const Eigen::VectorXd evals = solver.eigenvalues();   // ascending
    const Eigen::MatrixXd evecs = solver.eigenvectors();  // columns

    if (evals(evals.size() - 1) <= 0.0)
        throw DegenerateDataError("pca_fit: matrix has no variance");

    model.components.resize(d);
    model.variances.resize(d);
    for (std::size_t r = 0; r < d; ++r) {
        const Eigen::Index src = static_cast<Eigen::Index>(d - 1 - r);  // descending variance
        model.variances[r] = std::max(0.0, evals(src));
        auto& comp = model.components[r];
        comp.resize(d);
        for (std::size_t j = 0; j < d; ++j) comp[j] = evecs(static_cast<Eigen::Index>(j), src);
        // Sign rule: largest-magnitude entry positive.
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::fabs(comp[j]) > std::fabs(comp[arg])) arg = j;
        if (comp[arg] < 0.0)
            for (double& v : comp) v = -v;
    }
    return model;
}

std::vector<double> pca_project(const std::vector<double>& row, const PcaModel& model) {
    if (row.size() != model.mean.size()) throw ShapeError("pca_project: dimension mismatch");
    std::vector<double> scores(model.components.size(), 0.0);
    for (std::size_t c = 0; c < model.components.size(); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j)
            s += (row[j] - model.mean[j]) * model.components[c][j];
        scores[c] = s;
    }
    return scores;
}

double pca_project_first_row(const std::vector<double>& row, const PcaModel& model) {
    if (row.size() != model.mean.size())
        throw ShapeError("pca_project_first_row: dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j)
        s += (row[j] - model.mean[j]) * model.components[0][j];
    return s;
}

std::vector<double> pca_project_first(const std::vector<std::vector<double>>& X,
                                      const PcaModel& model) {
    std::vector<double> out;
    out.reserve(X.size());
    for (const auto& row : X) out.push_back(pca_project_first_row(row, model));
    return out;
}

std::vector<double> pca_reconstruct(const std::vector<double>& scores, const PcaModel& model) {
    if (scores.size() != model.components.size())
        throw ShapeError("pca_reconstruct: score count mismatch");
    std::vector<double> row(model.mean);
    for (std::size_t c = 0; c < scores.size(); ++c)
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] += scores[c] * model.components[c][j];
    return row;
}

Checkpoint to_checkpoint(const PcaModel& model, std::uint64_t seed) {
    const std::size_t d = model.mean.size();
    Checkpoint ckpt;
    ckpt.arch = "pca";
    ckpt.seed = seed;
    Tensor mean({d});
    for (std::size_t j = 0; j < d; ++j) mean[j] = model.mean[j];
    Tensor comps({model.components.size(), d});
    for (std::size_t c = 0; c < model.components.size(); ++c)
        for (std::size_t j = 0; j < d; ++j) comps[c * d + j] = model.components[c][j];
    Tensor vars({model.variances.size()});
    for (std::size_t c = 0; c < model.variances.size(); ++c) vars[c] = model.variances[c];
    ckpt.tensors.emplace("mean", std::move(mean));
    ckpt.tensors.emplace("components", std::move(comps));
    ckpt.tensors.emplace("variances", std::move(vars));
    return ckpt;
}

PcaModel pca_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.arch != "pca") throw ConfigError("pca_from_checkpoint: arch is " + ckpt.arch);
    const Tensor& mean = ckpt.tensors.at("mean");
    const Tensor& comps = ckpt.tensors.at("components");
    const Tensor& vars = ckpt.tensors.at("variances");
    const std::size_t d = mean.size();
    PcaModel model;
    model.mean.assign(mean.data(), mean.data() + d);
    model.components.resize(comps.dim(0));
    for (std::size_t c = 0; c < comps.dim(0); ++c)
        model.components[c].assign(comps.data() + c * d, comps.data() + (c + 1) * d);
    model.variances.assign(vars.data(), vars.data() + vars.size());
    return model;
}

SomGrid som_init(const SomSpec& spec, const std::vector<std::vector<double>>& data) {
    check_rows(data);
    if (spec.width == 0 || spec.height == 0) throw ConfigError("som_init: empty grid");
    const std::size_t d = data[0].size();

    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (const auto& row : data)
        for (std::size_t j = 0; j < d; ++j) {
            lo[j] = std::min(lo[j], row[j]);
            hi[j] = std::max(hi[j], row[j]);
        }

    SomGrid grid;
    grid.width = spec.width;
    grid.height = spec.height;
    grid.dim = d;
    grid.weights.resize(grid.nodes() * d);
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < grid.nodes(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            grid.weights[i * d + j] = lo[j] == hi[j] ? lo[j] : rng.uniform(lo[j], hi[j]);
    return grid;
}

SomGrid som_fit(const std::vector<std::vector<double>>& data, const SomSpec& spec) {
    SomGrid grid = som_init(spec, data);
    if (spec.epochs == 0) return grid;

    const std::size_t d = grid.dim;
    const double diag = std::sqrt(static_cast<double>(spec.width * spec.width +
                                                      spec.height * spec.height));
    const double radius0 = spec.radius_initial > 0.0 ? spec.radius_initial : diag / 2.0;
    const double denom = static_cast<double>(std::max<std::size_t>(spec.epochs, 2) - 1);

    Rng rng(derive_stream(spec.seed, 1));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
        const double frac = static_cast<double>(epoch) / denom;
        const double lr = spec.lr_initial * std::pow(spec.lr_final / spec.lr_initial, frac);
        const double radius = radius0 * std::pow(spec.radius_final / radius0, frac);
        const double two_sigma_sq = 2.0 * radius * radius;
        rng.shuffle(order);
        for (std::size_t idx : order) {
            const double* x = data[idx].data();
            const std::size_t bmu = som_bmu(data[idx], grid);
            const double bmu_r = static_cast<double>(bmu / grid.width);
            const double bmu_c = static_cast<double>(bmu % grid.width);
            for (std::size_t node = 0; node < grid.nodes(); ++node) {
                const double dr = static_cast<double>(node / grid.width) - bmu_r;
                const double dc = static_cast<double>(node % grid.width) - bmu_c;
                const double theta = std::exp(-(dr * dr + dc * dc) / two_sigma_sq);
                if (theta < 1e-12) continue;
                double* wv = grid.weights.data() + node * d;
                const double step = lr * theta;
                for (std::size_t j = 0; j < d; ++j) wv[j] += step * (x[j] - wv[j]);
            }
        }
    }
    return grid;
}

std::size_t som_bmu(const std::vector<double>& x, const SomGrid& grid) {
    if (x.size() != grid.dim) throw ShapeError("som_bmu: dimension mismatch");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.nodes(); ++i) {
        const double dist = sq_dist(x.data(), grid.node(i), grid.dim);
        if (dist < best_d) {
            best_d = dist;
            best = i;
        }
    }
    return best;
}

double som_bmu_distance(const std::vector<double>& x, const SomGrid& grid) {
    const std::size_t bmu = som_bmu(x, grid);
    return std::sqrt(sq_dist(x.data(), grid.node(bmu), grid.dim));
}

Checkpoint to_checkpoint(const SomGrid& grid, std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.arch = "som";
    ckpt.seed = seed;
    Tensor w({grid.height, grid.width, grid.dim});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = grid.weights[i];
    ckpt.tensors.emplace("weights", std::move(w));
    return ckpt;
}

SomGrid som_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.arch != "som") throw ConfigError("som_from_checkpoint: arch is " + ckpt.arch);
    const Tensor& w = ckpt.tensors.at("weights");
    if (w.ndim() != 3) throw ShapeError("som_from_checkpoint: weights must be [H,W,D]");
    SomGrid grid;
    grid.height = w.dim(0);
    grid.width = w.dim(1);
    grid.dim = w.dim(2);
    grid.weights.assign(w.data(), w.data() + w.size());
    return grid;
}

}  // namespace rulkit
