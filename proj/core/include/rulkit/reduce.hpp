#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rulkit/checkpoint.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

struct PcaModel {
    std::vector<double> mean;                     // feature means
    std::vector<std::vector<double>> components;  // orthonormal rows, by variance
    std::vector<double> variances;                // nonincreasing
};

// Covariance eigendecomposition of the row matrix X. Components are sign-fixed
// so the largest-magnitude entry of each is positive.
PcaModel pca_fit(const std::vector<std::vector<double>>& X);

std::vector<double> pca_project(const std::vector<double>& row, const PcaModel& model);
double pca_project_first_row(const std::vector<double>& row, const PcaModel& model);
std::vector<double> pca_project_first(const std::vector<std::vector<double>>& X,
                                      const PcaModel& model);
std::vector<double> pca_reconstruct(const std::vector<double>& scores, const PcaModel& model);

Checkpoint to_checkpoint(const PcaModel& model, std::uint64_t seed);
PcaModel pca_from_checkpoint(const Checkpoint& ckpt);

struct SomSpec {
    std::size_t width = 8;
    std::size_t height = 8;
    std::size_t epochs = 100;
    double lr_initial = 0.5;
    double lr_final = 0.01;
    double radius_initial = 0.0;  // 0 -> half the grid diagonal
    double radius_final = 0.5;
    std::uint64_t seed = 15;
};

struct SomGrid {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t dim = 0;
    std::vector<double> weights;  // (width*height) x dim, row-major

    const double* node(std::size_t i) const { return weights.data() + i * dim; }
    std::size_t nodes() const { return width * height; }
};

// Deterministic initialization: uniform in the per-dimension data range.
SomGrid som_init(const SomSpec& spec, const std::vector<std::vector<double>>& data);

// Classic online SOM with Gaussian neighborhood and exponentially decaying
// learning rate and radius. Deterministic for a given spec seed.
SomGrid som_fit(const std::vector<std::vector<double>>& data, const SomSpec& spec);

std::size_t som_bmu(const std::vector<double>& x, const SomGrid& grid);
double som_bmu_distance(const std::vector<double>& x, const SomGrid& grid);

Checkpoint to_checkpoint(const SomGrid& grid, std::uint64_t seed);
SomGrid som_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rulkit
