#include "rulkit/layers.hpp"

#include <cmath>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

Tensor kaiming_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

Tensor bias_uniform(std::size_t n, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t({n});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

const Tensor& fetch(const StateDict& dict, const std::string& key) {
    auto it = dict.find(key);
    if (it == dict.end()) throw ConfigError("state dict missing key: " + key);
    return it->second;
}

void assign(ad::Var& var, const Tensor& t, const std::string& key) {
    if (!var->value.same_shape(t))
        throw ShapeError("state dict shape mismatch for " + key + ": expected " +
                         var->value.shape_str() + ", got " + t.shape_str());
    var->value = t;
}

}  // namespace

// ----------------------------------------------------------------- Conv1dLayer

Conv1dLayer::Conv1dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                         Padding padding, Rng& rng, std::size_t stride, std::size_t dilation)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      dilation_(dilation),
      padding_(padding) {
    if (kernel == 0 || stride == 0 || dilation == 0)
        throw ConfigError("conv layer: kernel/stride/dilation must be positive");
    const std::size_t fan_in = in_channels * kernel;
    weight_ = ad::leaf(kaiming_uniform({out_channels, in_channels, kernel}, fan_in, rng), true);
    bias_ = ad::leaf(bias_uniform(out_channels, fan_in, rng), true);
}

ad::ConvDims Conv1dLayer::dims(std::size_t) const {
    ad::ConvDims d;
    d.kernel = kernel_;
    d.stride = stride_;
    d.dilation = dilation_;
    const std::size_t span = dilation_ * (kernel_ - 1);
    switch (padding_) {
        case Padding::none:
            break;
        case Padding::same:
            d.pad_left = span / 2;
            d.pad_right = span - span / 2;
            break;
        case Padding::causal:
            d.pad_left = span;
            break;
    }
    return d;
}

ad::Var Conv1dLayer::forward(const ad::Var& x) const {
    return ad::conv1d(x, weight_, bias_, dims(x->value.dim(2)));
}

std::size_t Conv1dLayer::out_len(std::size_t in_len) const {
    return ad::conv_out_len(in_len, dims(in_len));
}

void Conv1dLayer::save_state(const std::string& prefix, StateDict& dict) const {
    dict[prefix + ".weight"] = weight_->value;
    dict[prefix + ".bias"] = bias_->value;
}

void Conv1dLayer::load_state(const std::string& prefix, const StateDict& dict) {
    assign(weight_, fetch(dict, prefix + ".weight"), prefix + ".weight");
    assign(bias_, fetch(dict, prefix + ".bias"), prefix + ".bias");
}

// ----------------------------------------------------------------- DenseLayer

DenseLayer::DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng)
    : in_features_(in_features), out_features_(out_features) {
    weight_ = ad::leaf(kaiming_uniform({out_features, in_features}, in_features, rng), true);
    bias_ = ad::leaf(bias_uniform(out_features, in_features, rng), true);
}

ad::Var DenseLayer::forward(const ad::Var& x) const { return ad::dense(x, weight_, bias_); }

void DenseLayer::save_state(const std::string& prefix, StateDict& dict) const {
    dict[prefix + ".weight"] = weight_->value;
    dict[prefix + ".bias"] = bias_->value;
}

void DenseLayer::load_state(const std::string& prefix, const StateDict& dict) {
    assign(weight_, fetch(dict, prefix + ".weight"), prefix + ".weight");
    assign(bias_, fetch(dict, prefix + ".bias"), prefix + ".bias");
}

// ------------------------------------------------------------ BatchNorm1dLayer

BatchNorm1dLayer::BatchNorm1dLayer(std::size_t channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      running_mean_({channels}),
      running_var_({channels}) {
    gamma_ = ad::leaf(Tensor::full({channels}, 1.0), true);
    beta_ = ad::leaf(Tensor::full({channels}, 0.0), true);
    running_mean_.fill(0.0);
    running_var_.fill(1.0);
}

ad::Var BatchNorm1dLayer::forward(const ad::Var& x, bool train) {
    auto out = ad::batch_norm(x, gamma_, beta_, eps_, train, running_mean_, running_var_);
    if (train) {
        for (std::size_t c = 0; c < channels_; ++c) {
            running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * out.batch_mean[c];
            running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * out.batch_var[c];
        }
    }
    return out.y;
}

void BatchNorm1dLayer::save_state(const std::string& prefix, StateDict& dict) const {
    dict[prefix + ".gamma"] = gamma_->value;
    dict[prefix + ".beta"] = beta_->value;
    dict[prefix + ".running_mean"] = running_mean_;
    dict[prefix + ".running_var"] = running_var_;
}

void BatchNorm1dLayer::load_state(const std::string& prefix, const StateDict& dict) {
    assign(gamma_, fetch(dict, prefix + ".gamma"), prefix + ".gamma");
    assign(beta_, fetch(dict, prefix + ".beta"), prefix + ".beta");
    running_mean_ = fetch(dict, prefix + ".running_mean");
    running_var_ = fetch(dict, prefix + ".running_var");
}

// --------------------------------------------------------------- DropoutLayer

DropoutLayer::DropoutLayer(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
}

ad::Var DropoutLayer::forward(const ad::Var& x, bool train, Rng& rng) const {
    if (!train || rate_ == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate_);
    Tensor mask(x->value.shape());
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = rng.uniform() < rate_ ? 0.0 : keep_scale;
    return ad::mul(x, ad::constant(std::move(mask)));
}

}  // namespace rulkit
