#include "rulkit/optim.hpp"

#include <cmath>

#include "rulkit/errors.hpp"

namespace rulkit {

AdamW::AdamW(std::vector<ad::Var> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
    if (config_.lr <= 0.0) throw ConfigError("AdamW: lr must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::full(p->value.shape(), 0.0));
        v_.push_back(Tensor::full(p->value.shape(), 0.0));
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

void AdamW::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (p->grad.size() != p->value.size()) continue;  // never touched by backward
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p->value.size(); ++j) {
            const double g = p->grad[j];
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p->value[j] -= config_.lr * config_.weight_decay * p->value[j];
            p->value[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

}  // namespace rulkit
