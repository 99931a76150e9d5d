#pragma once

#include <cstddef>
#include <vector>

#include "rulkit/autodiff.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled: applied directly to the parameter
};

// AdamW with bias-corrected moments and decoupled weight decay.
class AdamW {
public:
    explicit AdamW(std::vector<ad::Var> params, AdamWConfig config = {});

    void zero_grad();
    void step();

    std::size_t step_count() const { return step_count_; }
    const AdamWConfig& config() const { return config_; }
    AdamWConfig& config() { return config_; }

    // Moment buffers, exposed for inspection in tests.
    const Tensor& first_moment(std::size_t i) const { return m_[i]; }
    const Tensor& second_moment(std::size_t i) const { return v_[i]; }

private:
    std::vector<ad::Var> params_;
    AdamWConfig config_;
    std::vector<Tensor> m_, v_;
    std::size_t step_count_ = 0;
};

}  // namespace rulkit
