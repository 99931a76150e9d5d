#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rulkit/autodiff.hpp"
#include "rulkit/checkpoint.hpp"
#include "rulkit/ingest.hpp"
#include "rulkit/layers.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/train.hpp"

namespace rulkit {

// Learnable K x D embedding table with per-code assignment counters.
struct Codebook {
    ad::Var embeddings;                // [K, D]
    std::vector<std::uint64_t> usage;  // assignments seen during training

    Codebook() = default;
    Codebook(std::size_t codes, std::size_t dim, Rng& rng);

    std::size_t codes() const { return embeddings->value.dim(0); }
    std::size_t dim() const { return embeddings->value.dim(1); }
    void reset_usage() { usage.assign(usage.size(), 0); }
    void observe(const std::vector<int>& indices);
    // exp(entropy) of the usage distribution; K when uniform, 1 when collapsed.
    double perplexity() const;
};

struct VqAssignment {
    std::vector<std::vector<double>> z_q;  // P rows of D
    std::vector<int> indices;
};

// Nearest-code lookup for a P x D latent (ties resolve to the lowest index).
VqAssignment vq_quantize(const std::vector<std::vector<double>>& z_e, const Codebook& codebook);

// Three-term objective on plain values, for oracle-style checks:
// mean squared reconstruction error + codebook term + beta * commitment term.
double vqvae_loss_value(const std::vector<double>& x, const std::vector<double>& x_hat,
                        const std::vector<double>& z_e, const std::vector<double>& z_q,
                        double beta);

// Computes a per-channel soft threshold from a feature map:
// tau = gap(|x|) * sigmoid(bn(dense(gap(|x|)))), guaranteeing 0 <= tau <= gap(|x|).
class AsModule {
public:
    AsModule(std::size_t channels, Rng& rng, bool use_bn = true);

    ad::Var threshold(const ad::Var& feature_map, bool train);  // [N,C,L] -> [N,C]

    std::vector<ad::Var> params();
    void save_state(const std::string& prefix, StateDict& dict) const;
    void load_state(const std::string& prefix, const StateDict& dict);
    DenseLayer& dense() { return dense_; }

private:
    DenseLayer dense_;
    BatchNorm1dLayer bn_;
    bool use_bn_;
};

// Pre-activation residual block: two stages of
// [batch norm -> LeakyReLU -> dropout -> causal dilated conv], an adaptive
// soft threshold on the result, plus a 1x1-conv projection of the block input.
class AstcnBlock {
public:
    AstcnBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t dilation, double leaky_slope, double dropout, Rng& rng);

    ad::Var forward(const ad::Var& x, bool train, Rng& rng);

    std::vector<ad::Var> params();
    void save_state(const std::string& prefix, StateDict& dict) const;
    void load_state(const std::string& prefix, const StateDict& dict);

private:
    BatchNorm1dLayer bn1_, bn2_;
    Conv1dLayer conv1_, conv2_, residual_;
    AsModule as_;
    DropoutLayer drop_;
    double leaky_;
};

// One encoder or decoder stage: optional nearest-neighbor upsample, a
// convolution, and optional batch norm + ReLU; encoder stages may end in a
// max pool.
struct CodecStage {
    Conv1dLayer conv;
    std::optional<BatchNorm1dLayer> bn;
    bool relu = false;
    std::size_t pool = 0;         // pool factor after the conv (0 = none)
    std::size_t upsample_to = 0;  // target length before the conv (0 = none)
};

enum class InputKind { raw, feature };

// Convolutional autoencoder; the flattened encoder output is the latent.
class AeModel : public Trainable {
public:
    AeModel(InputKind kind, std::uint64_t seed);

    void bind_dataset(std::vector<std::vector<double>> windows);

    std::size_t num_samples() const override { return windows_.size(); }
    ad::Var batch_loss(const std::vector<std::size_t>& indices, bool train, Rng& rng) override;
    std::vector<ad::Var> parameters() override;
    StateDict state() const override;
    void set_state(const StateDict& dict) override;

    std::vector<double> encode_latent(const std::vector<double>& window);
    std::vector<double> reconstruct(const std::vector<double>& window);

    std::size_t input_len() const { return input_len_; }
    std::size_t latent_len() const;
    std::size_t parameter_count();
    const std::string& arch() const { return arch_; }
    std::uint64_t seed() const { return seed_; }

    Checkpoint checkpoint() const;
    static AeModel from_checkpoint(const Checkpoint& ckpt);

private:
    ad::Var forward_encoder(const ad::Var& x, bool train);
    ad::Var forward_decoder(const ad::Var& z, bool train);

    InputKind kind_;
    std::string arch_;
    std::uint64_t seed_;
    std::size_t input_len_ = 0;
    std::vector<CodecStage> encoder_, decoder_;
    std::vector<std::vector<double>> windows_;
};

// VQ-VAE: autoencoder with a discrete codebook between encoder and decoder,
// trained with the three-term objective and straight-through gradients.
class VqVaeModel : public Trainable {
public:
    VqVaeModel(InputKind kind, std::uint64_t seed, double beta = 0.25);

    void bind_dataset(std::vector<std::vector<double>> windows);

    std::size_t num_samples() const override { return windows_.size(); }
    ad::Var batch_loss(const std::vector<std::size_t>& indices, bool train, Rng& rng) override;
    std::vector<ad::Var> parameters() override;
    StateDict state() const override;
    void set_state(const StateDict& dict) override;

    // Flattened position-major latent: [P*D], entry p*D + d.
    std::vector<double> encode_latent(const std::vector<double>& window);
    std::vector<double> reconstruct(const std::vector<double>& window);
    // L2 norm of z_e - z_q over all positions (the codebook-distance HI).
    double quantization_residual(const std::vector<double>& window);
    double codebook_perplexity(const std::vector<std::vector<double>>& windows);

    std::size_t input_len() const { return input_len_; }
    std::size_t latent_positions() const { return latent_positions_; }
    std::size_t latent_dim() const { return codebook_.dim(); }
    std::size_t parameter_count();
    const std::string& arch() const { return arch_; }
    std::uint64_t seed() const { return seed_; }
    double beta() const { return beta_; }
    Codebook& codebook() { return codebook_; }

    Checkpoint checkpoint() const;
    static VqVaeModel from_checkpoint(const Checkpoint& ckpt);

private:
    ad::Var forward_encoder(const ad::Var& x, bool train);
    ad::Var forward_decoder(const ad::Var& z, bool train);

    std::string arch_;
    std::uint64_t seed_ = 0;
    double beta_ = 0.25;
    std::size_t input_len_ = 0;
    std::size_t latent_positions_ = 0;
    std::vector<CodecStage> encoder_, decoder_;
    Codebook codebook_;
    std::vector<std::vector<double>> windows_;
};

// The RUL predictor: strided stem conv, max pool, dropout, three adaptive
// soft-threshold TCN blocks, global average pooling, and a dense head with a
// final ReLU so predictions stay nonnegative.
class AstcnModel : public Trainable {
public:
    explicit AstcnModel(std::uint64_t seed);

    void bind_dataset(std::vector<VibrationRecord> samples, std::vector<double> targets);

    std::size_t num_samples() const override { return samples_.size(); }
    ad::Var batch_loss(const std::vector<std::size_t>& indices, bool train, Rng& rng) override;
    std::vector<ad::Var> parameters() override;
    StateDict state() const override;
    void set_state(const StateDict& dict) override;

    double predict(const VibrationRecord& sample);
    std::vector<double> predict(const std::vector<VibrationRecord>& samples);

    std::size_t parameter_count();
    std::uint64_t seed() const { return seed_; }

    Checkpoint checkpoint() const;
    static AstcnModel from_checkpoint(const Checkpoint& ckpt);

    ad::Var forward(const ad::Var& x, bool train, Rng& rng);  // [N,2,L] -> [N,1]

private:
    std::uint64_t seed_;
    Rng init_rng_;  // construction-time weight stream; ordered before the layers
    Conv1dLayer stem_;
    DropoutLayer drop_;
    DenseLayer head_;
    std::vector<AstcnBlock> blocks_;
    std::vector<VibrationRecord> samples_;
    std::vector<double> targets_;
};

}  // namespace rulkit
