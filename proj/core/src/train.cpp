#include "rulkit/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "rulkit/errors.hpp"
#include "rulkit/optim.hpp"

namespace rulkit {

namespace {

double run_batches(Trainable& model, const std::vector<std::size_t>& indices,
                   std::size_t batch_size, bool train, Rng& rng, AdamW* opt) {
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, indices.size());
        std::vector<std::size_t> batch(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                       indices.begin() + static_cast<std::ptrdiff_t>(end));
        if (opt) opt->zero_grad();
        ad::Var loss = model.batch_loss(batch, train, rng);
        const double value = loss->value[0];
        if (!std::isfinite(value)) throw DivergenceError("non-finite loss during fit");
        if (opt) {
            ad::backward(loss);
            opt->step();
        }
        total += value * static_cast<double>(batch.size());
        seen += batch.size();
    }
    return total / static_cast<double>(seen);
}

}  // namespace

FitHistory fit(Trainable& model, const TrainConfig& config) {
    const std::size_t n = model.num_samples();
    if (n == 0) throw NoDataError("fit: model has no samples");
    if (config.batch_size == 0) throw ConfigError("fit: batch_size must be positive");
    if (config.val_fraction < 0.0 || config.val_fraction >= 1.0)
        throw ConfigError("fit: val_fraction must be in [0,1)");

    // Deterministic split: the validation block is the tail of the sample order.
    std::size_t n_val = static_cast<std::size_t>(
        std::ceil(config.val_fraction * static_cast<double>(n)));
    if (n_val >= n) n_val = n - 1;
    const std::size_t n_train = n - n_val;

    std::vector<std::size_t> train_idx(n_train);
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::vector<std::size_t> val_idx(n_val);
    std::iota(val_idx.begin(), val_idx.end(), n_train);

    AdamW opt(model.parameters(),
              AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng rng(config.seed);

    FitHistory history;
    history.best_val = std::numeric_limits<double>::infinity();
    StateDict best_state = model.state();
    std::size_t bad_epochs = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(train_idx);
        const double train_loss =
            run_batches(model, train_idx, config.batch_size, true, rng, &opt);
        const double val_loss =
            val_idx.empty() ? train_loss
                            : run_batches(model, val_idx, config.batch_size, false, rng, nullptr);
        history.train_loss.push_back(train_loss);
        history.val_loss.push_back(val_loss);

        if (val_loss < history.best_val) {
            history.best_val = val_loss;
            history.best_epoch = epoch;
            best_state = model.state();
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs == config.patience) {
                history.early_stopped = true;
                break;
            }
        }
    }

    model.set_state(best_state);
    return history;
}

}  // namespace rulkit
