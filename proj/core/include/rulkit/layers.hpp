#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rulkit/autodiff.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

enum class Padding { none, same, causal };

// 1-D convolution over [N, C_in, L] inputs. Weights use Kaiming-uniform init.
class Conv1dLayer {
public:
    Conv1dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                Padding padding, Rng& rng, std::size_t stride = 1, std::size_t dilation = 1);

    ad::Var forward(const ad::Var& x) const;
    std::size_t out_len(std::size_t in_len) const;

    std::vector<ad::Var> params() const { return {weight_, bias_}; }
    void save_state(const std::string& prefix, StateDict& dict) const;
    void load_state(const std::string& prefix, const StateDict& dict);

    const ad::Var& weight() const { return weight_; }
    const ad::Var& bias() const { return bias_; }
    ad::ConvDims dims(std::size_t in_len) const;

private:
    std::size_t in_channels_, out_channels_, kernel_, stride_, dilation_;
    Padding padding_;
    ad::Var weight_;  // [C_out, C_in, K]
    ad::Var bias_;    // [C_out]
};

// Fully connected layer over [N, F_in] inputs.
class DenseLayer {
public:
    DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng);

    ad::Var forward(const ad::Var& x) const;

    std::vector<ad::Var> params() const { return {weight_, bias_}; }
    void save_state(const std::string& prefix, StateDict& dict) const;
    void load_state(const std::string& prefix, const StateDict& dict);

    const ad::Var& weight() const { return weight_; }
    const ad::Var& bias() const { return bias_; }

private:
    std::size_t in_features_, out_features_;
    ad::Var weight_;  // [F_out, F_in]
    ad::Var bias_;    // [F_out]
};

// Batch normalization over the channel axis (dim 1). Keeps running statistics
// updated with momentum for use at inference time.
class BatchNorm1dLayer {
public:
    explicit BatchNorm1dLayer(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

    ad::Var forward(const ad::Var& x, bool train);

    std::vector<ad::Var> params() const { return {gamma_, beta_}; }
    void save_state(const std::string& prefix, StateDict& dict) const;
    void load_state(const std::string& prefix, const StateDict& dict);

    const Tensor& running_mean() const { return running_mean_; }
    const Tensor& running_var() const { return running_var_; }

private:
    std::size_t channels_;
    double eps_, momentum_;
    ad::Var gamma_, beta_;
    Tensor running_mean_, running_var_;
};

// Inverted dropout: active only in training, scales kept units by 1/(1-rate).
class DropoutLayer {
public:
    explicit DropoutLayer(double rate);

    ad::Var forward(const ad::Var& x, bool train, Rng& rng) const;
    double rate() const { return rate_; }

private:
    double rate_;
};

}  // namespace rulkit
