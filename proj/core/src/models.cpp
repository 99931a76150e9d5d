#include "rulkit/models.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

ad::Var run_stages(std::vector<CodecStage>& stages, ad::Var x, bool train) {
    for (auto& stage : stages) {
        if (stage.upsample_to) x = ad::upsample_nearest(x, stage.upsample_to);
        x = stage.conv.forward(x);
        if (stage.bn) x = stage.bn->forward(x, train);
        if (stage.relu) x = ad::relu(x);
        if (stage.pool) x = ad::max_pool1d(x, stage.pool, stage.pool);
    }
    return x;
}

CodecStage enc_stage(Rng& rng, std::size_t c_in, std::size_t c_out, Padding pad,
                     std::size_t pool, bool bn_relu) {
    CodecStage stage{Conv1dLayer(c_in, c_out, 3, pad, rng), std::nullopt, bn_relu, pool, 0};
    if (bn_relu) stage.bn.emplace(c_out);
    return stage;
}

CodecStage dec_stage(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t upsample_to,
                     bool bn_relu) {
    CodecStage stage{Conv1dLayer(c_in, c_out, 3, Padding::same, rng), std::nullopt, bn_relu, 0,
                     upsample_to};
    if (bn_relu) stage.bn.emplace(c_out);
    return stage;
}

// Encoder/decoder pairs follow the published layer tables; the latent head and
// the reconstruction output stay linear so signed values survive.
void build_codec(InputKind kind, bool vq, Rng& rng, std::vector<CodecStage>& enc,
                 std::vector<CodecStage>& dec, std::size_t& input_len,
                 std::size_t& latent_positions, std::size_t& latent_dim) {
    enc.clear();
    dec.clear();
    if (kind == InputKind::raw && !vq) {
        input_len = 1024;
        latent_positions = 32;
        latent_dim = 1;
        enc.push_back(enc_stage(rng, 1, 16, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 16, 32, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 32, 64, Padding::same, 4, true));
        enc.push_back(enc_stage(rng, 64, 128, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 128, 32, Padding::same, 0, true));
        enc.push_back(enc_stage(rng, 32, 1, Padding::same, 0, false));
        dec.push_back(dec_stage(rng, 1, 32, 0, true));
        dec.push_back(dec_stage(rng, 32, 128, 0, true));
        dec.push_back(dec_stage(rng, 128, 64, 64, true));
        dec.push_back(dec_stage(rng, 64, 32, 256, true));
        dec.push_back(dec_stage(rng, 32, 16, 512, true));
        dec.push_back(dec_stage(rng, 16, 1, 1024, false));
    } else if (kind == InputKind::raw && vq) {
        input_len = 1024;
        latent_positions = 32;
        latent_dim = 16;
        enc.push_back(enc_stage(rng, 1, 4, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 4, 4, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 4, 8, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 8, 8, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 8, 16, Padding::same, 2, true));
        enc.push_back(enc_stage(rng, 16, 16, Padding::same, 0, false));
        dec.push_back(dec_stage(rng, 16, 16, 0, true));
        dec.push_back(dec_stage(rng, 16, 8, 64, true));
        dec.push_back(dec_stage(rng, 8, 8, 128, true));
        dec.push_back(dec_stage(rng, 8, 4, 256, true));
        dec.push_back(dec_stage(rng, 4, 4, 512, true));
        dec.push_back(dec_stage(rng, 4, 1, 1024, false));
    } else if (kind == InputKind::feature && !vq) {
        input_len = 38;
        latent_positions = 9;
        latent_dim = 1;
        enc.push_back(enc_stage(rng, 1, 16, Padding::none, 2, true));  // 38 -> 36 -> 18
        enc.push_back(enc_stage(rng, 16, 32, Padding::same, 2, true));  // 18 -> 9
        enc.push_back(enc_stage(rng, 32, 64, Padding::same, 0, true));
        enc.push_back(enc_stage(rng, 64, 128, Padding::same, 0, true));
        enc.push_back(enc_stage(rng, 128, 32, Padding::same, 0, true));
        enc.push_back(enc_stage(rng, 32, 1, Padding::same, 0, false));
        dec.push_back(dec_stage(rng, 1, 32, 0, true));
        dec.push_back(dec_stage(rng, 32, 128, 0, true));
        dec.push_back(dec_stage(rng, 128, 64, 0, true));
        dec.push_back(dec_stage(rng, 64, 32, 0, true));
        dec.push_back(dec_stage(rng, 32, 16, 18, true));
        dec.push_back(dec_stage(rng, 16, 1, 38, false));
    } else {
        input_len = 38;
        latent_positions = 9;
        latent_dim = 4;
        enc.push_back(enc_stage(rng, 1, 4, Padding::none, 2, true));  // 38 -> 36 -> 18
        enc.push_back(enc_stage(rng, 4, 4, Padding::same, 2, true));  // 18 -> 9
        enc.push_back(enc_stage(rng, 4, 8, Padding::same, 0, true));
        enc.push_back(enc_stage(rng, 8, 16, Padding::same, 0, true));
        enc.push_back(enc_stage(rng, 16, 4, Padding::same, 0, false));
        dec.push_back(dec_stage(rng, 4, 16, 0, true));
        dec.push_back(dec_stage(rng, 16, 8, 0, true));
        dec.push_back(dec_stage(rng, 8, 4, 0, true));
        dec.push_back(dec_stage(rng, 4, 4, 18, true));
        dec.push_back(dec_stage(rng, 4, 1, 38, false));
    }
}

void stage_params(std::vector<CodecStage>& stages, std::vector<ad::Var>& out) {
    for (auto& stage : stages) {
        for (auto& p : stage.conv.params()) out.push_back(p);
        if (stage.bn)
            for (auto& p : stage.bn->params()) out.push_back(p);
    }
}

void stage_save(const std::vector<CodecStage>& stages, const std::string& prefix,
                StateDict& dict) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string name = prefix + std::to_string(i);
        stages[i].conv.save_state(name + ".conv", dict);
        if (stages[i].bn) stages[i].bn->save_state(name + ".bn", dict);
    }
}

void stage_load(std::vector<CodecStage>& stages, const std::string& prefix,
                const StateDict& dict) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string name = prefix + std::to_string(i);
        stages[i].conv.load_state(name + ".conv", dict);
        if (stages[i].bn) stages[i].bn->load_state(name + ".bn", dict);
    }
}

Tensor make_batch(const std::vector<std::vector<double>>& windows,
                  const std::vector<std::size_t>& indices, std::size_t len) {
    Tensor x({indices.size(), 1, len});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& w = windows[indices[b]];
        if (w.size() != len) throw ShapeError("bound window has wrong length");
        for (std::size_t i = 0; i < len; ++i) x[b * len + i] = w[i];
    }
    return x;
}

double perplexity_of_counts(const std::vector<std::uint64_t>& counts) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) return 0.0;
    double entropy = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

}  // namespace

// ------------------------------------------------------------------ Codebook

Codebook::Codebook(std::size_t codes, std::size_t dim, Rng& rng) {
    if (codes == 0 || dim == 0) throw ConfigError("codebook: codes and dim must be positive");
    Tensor emb({codes, dim});
    const double bound = 1.0 / static_cast<double>(codes);
    for (std::size_t i = 0; i < emb.size(); ++i) emb[i] = rng.uniform(-bound, bound);
    embeddings = ad::leaf(std::move(emb), true);
    usage.assign(codes, 0);
}

void Codebook::observe(const std::vector<int>& indices) {
    for (int k : indices) usage[static_cast<std::size_t>(k)] += 1;
}

double Codebook::perplexity() const { return perplexity_of_counts(usage); }

VqAssignment vq_quantize(const std::vector<std::vector<double>>& z_e, const Codebook& codebook) {
    const std::size_t dim = codebook.dim();
    const std::size_t codes = codebook.codes();
    const double* emb = codebook.embeddings->value.data();

    VqAssignment out;
    out.z_q.reserve(z_e.size());
    out.indices.reserve(z_e.size());
    for (const auto& row : z_e) {
        if (row.size() != dim) throw ShapeError("vq_quantize: latent dimension mismatch");
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < codes; ++k) {
            double dist = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = row[d] - emb[k * dim + d];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_k = k;
            }
        }
        out.indices.push_back(static_cast<int>(best_k));
        out.z_q.emplace_back(emb + best_k * dim, emb + (best_k + 1) * dim);
    }
    return out;
}

double vqvae_loss_value(const std::vector<double>& x, const std::vector<double>& x_hat,
                        const std::vector<double>& z_e, const std::vector<double>& z_q,
                        double beta) {
    if (x.size() != x_hat.size() || z_e.size() != z_q.size())
        throw ShapeError("vqvae_loss_value: length mismatch");
    double recon = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_hat[i];
        recon += d * d;
    }
    recon /= static_cast<double>(x.size());
    double codebook_term = 0.0;
    for (std::size_t i = 0; i < z_e.size(); ++i) {
        const double d = z_e[i] - z_q[i];
        codebook_term += d * d;
    }
    return recon + codebook_term + beta * codebook_term;
}

// ------------------------------------------------------------------ AsModule

AsModule::AsModule(std::size_t channels, Rng& rng, bool use_bn)
    : dense_(channels, channels, rng), bn_(channels), use_bn_(use_bn) {}

ad::Var AsModule::threshold(const ad::Var& feature_map, bool train) {
    auto h = ad::global_avg_pool(ad::abs(feature_map));  // [N,C]
    auto gate = dense_.forward(h);
    if (use_bn_) gate = bn_.forward(gate, train);
    gate = ad::sigmoid(gate);
    return ad::mul(h, gate);
}

std::vector<ad::Var> AsModule::params() {
    std::vector<ad::Var> out = dense_.params();
    if (use_bn_)
        for (auto& p : bn_.params()) out.push_back(p);
    return out;
}

void AsModule::save_state(const std::string& prefix, StateDict& dict) const {
    dense_.save_state(prefix + ".dense", dict);
    if (use_bn_) bn_.save_state(prefix + ".bn", dict);
}

void AsModule::load_state(const std::string& prefix, const StateDict& dict) {
    dense_.load_state(prefix + ".dense", dict);
    if (use_bn_) bn_.load_state(prefix + ".bn", dict);
}

// ---------------------------------------------------------------- AstcnBlock

AstcnBlock::AstcnBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                       std::size_t dilation, double leaky_slope, double dropout, Rng& rng)
    : bn1_(in_channels),
      bn2_(out_channels),
      conv1_(in_channels, out_channels, kernel, Padding::causal, rng, 1, dilation),
      conv2_(out_channels, out_channels, kernel, Padding::causal, rng, 1, dilation),
      residual_(in_channels, out_channels, 1, Padding::none, rng),
      as_(out_channels, rng),
      drop_(dropout),
      leaky_(leaky_slope) {}

ad::Var AstcnBlock::forward(const ad::Var& x, bool train, Rng& rng) {
    auto h = bn1_.forward(x, train);
    h = ad::leaky_relu(h, leaky_);
    h = drop_.forward(h, train, rng);
    h = conv1_.forward(h);
    h = bn2_.forward(h, train);
    h = ad::leaky_relu(h, leaky_);
    h = drop_.forward(h, train, rng);
    h = conv2_.forward(h);
    auto tau = as_.threshold(h, train);
    h = ad::soft_threshold(h, tau);
    return ad::add(h, residual_.forward(x));
}

std::vector<ad::Var> AstcnBlock::params() {
    std::vector<ad::Var> out;
    for (auto& p : bn1_.params()) out.push_back(p);
    for (auto& p : conv1_.params()) out.push_back(p);
    for (auto& p : bn2_.params()) out.push_back(p);
    for (auto& p : conv2_.params()) out.push_back(p);
    for (auto& p : as_.params()) out.push_back(p);
    for (auto& p : residual_.params()) out.push_back(p);
    return out;
}

void AstcnBlock::save_state(const std::string& prefix, StateDict& dict) const {
    bn1_.save_state(prefix + ".bn1", dict);
    conv1_.save_state(prefix + ".conv1", dict);
    bn2_.save_state(prefix + ".bn2", dict);
    conv2_.save_state(prefix + ".conv2", dict);
    as_.save_state(prefix + ".as", dict);
    residual_.save_state(prefix + ".res", dict);
}

void AstcnBlock::load_state(const std::string& prefix, const StateDict& dict) {
    bn1_.load_state(prefix + ".bn1", dict);
    conv1_.load_state(prefix + ".conv1", dict);
    bn2_.load_state(prefix + ".bn2", dict);
    conv2_.load_state(prefix + ".conv2", dict);
    as_.load_state(prefix + ".as", dict);
    residual_.load_state(prefix + ".res", dict);
}

// ------------------------------------------------------------------- AeModel

AeModel::AeModel(InputKind kind, std::uint64_t seed)
    : kind_(kind), arch_(kind == InputKind::raw ? "ae-raw" : "ae-feat"), seed_(seed) {
    Rng rng(seed);
    std::size_t latent_positions = 0, latent_dim = 0;
    build_codec(kind, false, rng, encoder_, decoder_, input_len_, latent_positions, latent_dim);
}

void AeModel::bind_dataset(std::vector<std::vector<double>> windows) {
    for (const auto& w : windows)
        if (w.size() != input_len_) throw ShapeError("bind_dataset: window length mismatch");
    windows_ = std::move(windows);
}

ad::Var AeModel::forward_encoder(const ad::Var& x, bool train) {
    return run_stages(encoder_, x, train);
}

ad::Var AeModel::forward_decoder(const ad::Var& z, bool train) {
    return run_stages(decoder_, z, train);
}

ad::Var AeModel::batch_loss(const std::vector<std::size_t>& indices, bool train, Rng&) {
    auto x = ad::leaf(make_batch(windows_, indices, input_len_));
    auto z = forward_encoder(x, train);
    auto x_hat = forward_decoder(z, train);
    return ad::mse(x_hat, x);
}

std::vector<ad::Var> AeModel::parameters() {
    std::vector<ad::Var> out;
    stage_params(encoder_, out);
    stage_params(decoder_, out);
    return out;
}

StateDict AeModel::state() const {
    StateDict dict;
    stage_save(encoder_, "enc", dict);
    stage_save(decoder_, "dec", dict);
    return dict;
}

void AeModel::set_state(const StateDict& dict) {
    stage_load(encoder_, "enc", dict);
    stage_load(decoder_, "dec", dict);
}

std::vector<double> AeModel::encode_latent(const std::vector<double>& window) {
    auto x = ad::leaf(make_batch({window}, {0}, input_len_));
    auto z = forward_encoder(x, false);
    const std::size_t dim = z->value.dim(1);
    const std::size_t positions = z->value.dim(2);
    std::vector<double> flat(dim * positions);
    for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t d = 0; d < dim; ++d) flat[p * dim + d] = z->value[d * positions + p];
    return flat;
}

std::vector<double> AeModel::reconstruct(const std::vector<double>& window) {
    auto x = ad::leaf(make_batch({window}, {0}, input_len_));
    auto x_hat = forward_decoder(forward_encoder(x, false), false);
    return {x_hat->value.data(), x_hat->value.data() + x_hat->value.size()};
}

std::size_t AeModel::latent_len() const {
    return kind_ == InputKind::raw ? 32 : 9;
}

std::size_t AeModel::parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p->value.size();
    return n;
}

Checkpoint AeModel::checkpoint() const { return Checkpoint{arch_, seed_, state()}; }

AeModel AeModel::from_checkpoint(const Checkpoint& ckpt) {
    InputKind kind;
    if (ckpt.arch == "ae-raw")
        kind = InputKind::raw;
    else if (ckpt.arch == "ae-feat")
        kind = InputKind::feature;
    else
        throw ConfigError("AeModel: unexpected arch " + ckpt.arch);
    AeModel model(kind, ckpt.seed);
    model.set_state(ckpt.tensors);
    return model;
}

// ---------------------------------------------------------------- VqVaeModel

VqVaeModel::VqVaeModel(InputKind kind, std::uint64_t seed, double beta)
    : arch_(kind == InputKind::raw ? "vqvae-raw" : "vqvae-feat"), seed_(seed), beta_(beta) {
    Rng rng(seed);
    std::size_t latent_dim = 0;
    build_codec(kind, true, rng, encoder_, decoder_, input_len_, latent_positions_, latent_dim);
    codebook_ = Codebook(32, latent_dim, rng);
}

void VqVaeModel::bind_dataset(std::vector<std::vector<double>> windows) {
    for (const auto& w : windows)
        if (w.size() != input_len_) throw ShapeError("bind_dataset: window length mismatch");
    windows_ = std::move(windows);
}

ad::Var VqVaeModel::forward_encoder(const ad::Var& x, bool train) {
    return run_stages(encoder_, x, train);
}

ad::Var VqVaeModel::forward_decoder(const ad::Var& z, bool train) {
    return run_stages(decoder_, z, train);
}

ad::Var VqVaeModel::batch_loss(const std::vector<std::size_t>& indices, bool train, Rng&) {
    const double inv_batch = 1.0 / static_cast<double>(indices.size());
    auto x = ad::leaf(make_batch(windows_, indices, input_len_));
    auto z_e = forward_encoder(x, train);
    auto vq = ad::vq_quantize(z_e, codebook_.embeddings);
    if (train) codebook_.observe(vq.indices);

    auto x_hat = forward_decoder(ad::straight_through(z_e, vq.z_q), train);
    auto recon = ad::mse(x_hat, x);
    auto codebook_term =
        ad::scale(ad::sum_squares(ad::sub(ad::detach(z_e), vq.z_q)), inv_batch);
    auto commitment =
        ad::scale(ad::sum_squares(ad::sub(z_e, ad::detach(vq.z_q))), beta_ * inv_batch);
    return ad::add(ad::add(recon, codebook_term), commitment);
}

std::vector<ad::Var> VqVaeModel::parameters() {
    std::vector<ad::Var> out;
    stage_params(encoder_, out);
    out.push_back(codebook_.embeddings);
    stage_params(decoder_, out);
    return out;
}

StateDict VqVaeModel::state() const {
    StateDict dict;
    stage_save(encoder_, "enc", dict);
    stage_save(decoder_, "dec", dict);
    dict["codebook.embeddings"] = codebook_.embeddings->value;
    Tensor beta = Tensor::scalar(beta_);
    dict["beta"] = beta;
    return dict;
}

void VqVaeModel::set_state(const StateDict& dict) {
    stage_load(encoder_, "enc", dict);
    stage_load(decoder_, "dec", dict);
    const auto emb = dict.find("codebook.embeddings");
    if (emb == dict.end()) throw ConfigError("state dict missing key: codebook.embeddings");
    if (!codebook_.embeddings->value.same_shape(emb->second))
        throw ShapeError("codebook shape mismatch");
    codebook_.embeddings->value = emb->second;
    const auto beta = dict.find("beta");
    if (beta != dict.end()) beta_ = beta->second[0];
}

std::vector<double> VqVaeModel::encode_latent(const std::vector<double>& window) {
    auto x = ad::leaf(make_batch({window}, {0}, input_len_));
    auto z = forward_encoder(x, false);
    const std::size_t dim = z->value.dim(1);
    const std::size_t positions = z->value.dim(2);
    std::vector<double> flat(dim * positions);
    for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t d = 0; d < dim; ++d) flat[p * dim + d] = z->value[d * positions + p];
    return flat;
}

std::vector<double> VqVaeModel::reconstruct(const std::vector<double>& window) {
    auto x = ad::leaf(make_batch({window}, {0}, input_len_));
    auto z_e = forward_encoder(x, false);
    auto vq = ad::vq_quantize(z_e, codebook_.embeddings);
    auto x_hat = forward_decoder(vq.z_q, false);
    return {x_hat->value.data(), x_hat->value.data() + x_hat->value.size()};
}

double VqVaeModel::quantization_residual(const std::vector<double>& window) {
    const std::vector<double> flat = encode_latent(window);
    const std::size_t dim = codebook_.dim();
    std::vector<std::vector<double>> rows(latent_positions_);
    for (std::size_t p = 0; p < latent_positions_; ++p)
        rows[p].assign(flat.begin() + static_cast<std::ptrdiff_t>(p * dim),
                       flat.begin() + static_cast<std::ptrdiff_t>((p + 1) * dim));
    const VqAssignment assign = vq_quantize(rows, codebook_);
    double sq = 0.0;
    for (std::size_t p = 0; p < latent_positions_; ++p)
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = rows[p][d] - assign.z_q[p][d];
            sq += diff * diff;
        }
    return std::sqrt(sq);
}

double VqVaeModel::codebook_perplexity(const std::vector<std::vector<double>>& windows) {
    std::vector<std::uint64_t> counts(codebook_.codes(), 0);
    const std::size_t dim = codebook_.dim();
    for (const auto& window : windows) {
        const std::vector<double> flat = encode_latent(window);
        std::vector<std::vector<double>> rows(latent_positions_);
        for (std::size_t p = 0; p < latent_positions_; ++p)
            rows[p].assign(flat.begin() + static_cast<std::ptrdiff_t>(p * dim),
                           flat.begin() + static_cast<std::ptrdiff_t>((p + 1) * dim));
        for (int k : vq_quantize(rows, codebook_).indices)
            counts[static_cast<std::size_t>(k)] += 1;
    }
    return perplexity_of_counts(counts);
}

std::size_t VqVaeModel::parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p->value.size();
    return n;
}

Checkpoint VqVaeModel::checkpoint() const { return Checkpoint{arch_, seed_, state()}; }

VqVaeModel VqVaeModel::from_checkpoint(const Checkpoint& ckpt) {
    InputKind kind;
    if (ckpt.arch == "vqvae-raw")
        kind = InputKind::raw;
    else if (ckpt.arch == "vqvae-feat")
        kind = InputKind::feature;
    else
        throw ConfigError("VqVaeModel: unexpected arch " + ckpt.arch);
    VqVaeModel model(kind, ckpt.seed);
    model.set_state(ckpt.tensors);
    return model;
}

// ---------------------------------------------------------------- AstcnModel

AstcnModel::AstcnModel(std::uint64_t seed)
    : seed_(seed),
      init_rng_(seed),
      stem_(2, 16, 12, Padding::none, init_rng_, 4),
      drop_(0.3),
      head_(4, 1, init_rng_) {
    blocks_.emplace_back(16, 12, 3, 1, 0.2, 0.3, init_rng_);
    blocks_.emplace_back(12, 6, 3, 2, 0.2, 0.3, init_rng_);
    blocks_.emplace_back(6, 4, 3, 4, 0.2, 0.3, init_rng_);
    // Start predictions mid-range: a negative initial head output would put
    // the whole batch in the final ReLU's dead zone, freezing training at 0.
    // The weights shrink too, so the bias dominates regardless of the pooled
    // feature magnitude.
    head_.bias()->value.fill(0.5);
    for (double& w : head_.weight()->value.values()) w *= 0.05;
}

void AstcnModel::bind_dataset(std::vector<VibrationRecord> samples, std::vector<double> targets) {
    if (samples.size() != targets.size())
        throw ShapeError("bind_dataset: samples/targets length mismatch");
    for (const auto& s : samples)
        if (s.horizontal.size() != kSamplesPerRecord || s.vertical.size() != kSamplesPerRecord)
            throw ShapeError("bind_dataset: record with wrong sample count");
    samples_ = std::move(samples);
    targets_ = std::move(targets);
}

ad::Var AstcnModel::forward(const ad::Var& x, bool train, Rng& rng) {
    auto h = stem_.forward(x);
    h = ad::max_pool1d(h, 4, 4);
    h = drop_.forward(h, train, rng);
    for (auto& block : blocks_) h = block.forward(h, train, rng);
    h = ad::global_avg_pool(h);
    h = head_.forward(h);
    return ad::relu(h);
}

ad::Var AstcnModel::batch_loss(const std::vector<std::size_t>& indices, bool train, Rng& rng) {
    const std::size_t batch = indices.size();
    const std::size_t len = kSamplesPerRecord;
    Tensor x({batch, 2, len});
    Tensor y({batch, 1});
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& rec = samples_[indices[b]];
        for (std::size_t i = 0; i < len; ++i) {
            x[(b * 2 + 0) * len + i] = rec.horizontal[i];
            x[(b * 2 + 1) * len + i] = rec.vertical[i];
        }
        y[b] = targets_[indices[b]];
    }
    auto pred = forward(ad::leaf(std::move(x)), train, rng);
    return ad::mse(pred, ad::leaf(std::move(y)));
}

std::vector<ad::Var> AstcnModel::parameters() {
    std::vector<ad::Var> out;
    for (auto& p : stem_.params()) out.push_back(p);
    for (auto& block : blocks_)
        for (auto& p : block.params()) out.push_back(p);
    for (auto& p : head_.params()) out.push_back(p);
    return out;
}

StateDict AstcnModel::state() const {
    StateDict dict;
    stem_.save_state("stem", dict);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].save_state("block" + std::to_string(i + 1), dict);
    head_.save_state("head", dict);
    return dict;
}

void AstcnModel::set_state(const StateDict& dict) {
    stem_.load_state("stem", dict);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].load_state("block" + std::to_string(i + 1), dict);
    head_.load_state("head", dict);
}

double AstcnModel::predict(const VibrationRecord& sample) {
    return predict(std::vector<VibrationRecord>{sample})[0];
}

std::vector<double> AstcnModel::predict(const std::vector<VibrationRecord>& samples) {
    const std::size_t len = kSamplesPerRecord;
    std::vector<double> out;
    out.reserve(samples.size());
    Rng rng(0);  // unused in evaluation mode
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < samples.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, samples.size() - start);
        Tensor x({count, 2, len});
        for (std::size_t b = 0; b < count; ++b) {
            const auto& rec = samples[start + b];
            if (rec.horizontal.size() != len || rec.vertical.size() != len)
                throw ShapeError("predict: record with wrong sample count");
            for (std::size_t i = 0; i < len; ++i) {
                x[(b * 2 + 0) * len + i] = rec.horizontal[i];
                x[(b * 2 + 1) * len + i] = rec.vertical[i];
            }
        }
        auto pred = forward(ad::leaf(std::move(x)), false, rng);
        for (std::size_t b = 0; b < count; ++b) out.push_back(pred->value[b]);
    }
    return out;
}

std::size_t AstcnModel::parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p->value.size();
    return n;
}

Checkpoint AstcnModel::checkpoint() const { return Checkpoint{"astcn", seed_, state()}; }

AstcnModel AstcnModel::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.arch != "astcn") throw ConfigError("AstcnModel: unexpected arch " + ckpt.arch);
    AstcnModel model(ckpt.seed);
    model.set_state(ckpt.tensors);
    return model;
}

}  // namespace rulkit
