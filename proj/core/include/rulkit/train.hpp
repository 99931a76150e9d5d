#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rulkit/autodiff.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 100;
    std::size_t patience = 15;
    double weight_decay = 0.0;
    std::uint64_t seed = 15;
    double val_fraction = 0.1;
};

// Anything fit() can train: exposes its sample count, builds a scalar loss for
// a batch of sample indices, and can snapshot/restore its parameter state.
class Trainable {
public:
    virtual ~Trainable() = default;

    virtual std::size_t num_samples() const = 0;
    virtual ad::Var batch_loss(const std::vector<std::size_t>& indices, bool train, Rng& rng) = 0;
    virtual std::vector<ad::Var> parameters() = 0;
    virtual StateDict state() const = 0;
    virtual void set_state(const StateDict& dict) = 0;
};

struct FitHistory {
    std::vector<double> train_loss;  // one entry per epoch run
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;  // 1-based epoch with the lowest validation loss
    double best_val = 0.0;
    bool early_stopped = false;
};

// Mini-batch training with a deterministic tail validation split, early
// stopping on validation loss, and restoration of the best-epoch state.
// Throws DivergenceError when a non-finite loss appears.
FitHistory fit(Trainable& model, const TrainConfig& config);

}  // namespace rulkit
