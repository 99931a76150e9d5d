#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "rulkit/tensor.hpp"

namespace rulkit::ad {

class Node;
using Var = std::shared_ptr<Node>;

// One vertex of the reverse-mode graph, built define-by-run by the op
// functions below. The backprop closure adds this node's grad contribution
// into its parents' grads; intermediate nodes die with the loss Var.
class Node {
public:
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;

    explicit Node(Tensor v, bool req = false) : value(std::move(v)), requires_grad(req) {}

    void ensure_grad() {
        if (grad.size() != value.size()) grad = Tensor(value.shape());
    }
    void zero_grad() {
        if (grad.size() == value.size())
            grad.fill(0.0);
        else
            grad = Tensor(value.shape());
    }
};

// Trainable parameter (requires_grad) or plain input.
Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
inline Var constant(double v) { return constant(Tensor::scalar(v)); }

// Reverse sweep from a scalar loss. Every node reachable from the loss gets
// its grad populated; parameters the graph never touched keep theirs as-is
// (the optimizer zeroes them beforehand).
void backward(const Var& loss);

// ---------------------------------------------------------------- elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double negative_slope);
Var sigmoid(const Var& a);
Var abs(const Var& a);

// ---------------------------------------------------------------- reductions
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);
// Mean over all elements of (pred - target)^2.
Var mse(const Var& pred, const Var& target);

// ---------------------------------------------------------------- structure
Var detach(const Var& a);
Var reshape(const Var& a, std::vector<std::size_t> shape);

// ------------------------------------------------------------------- layers
// x: [N, F_in], w: [F_out, F_in], b: [F_out] -> [N, F_out]
Var dense(const Var& x, const Var& w, const Var& b);

struct ConvDims {
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t pad_left = 0;
    std::size_t pad_right = 0;
};
std::size_t conv_out_len(std::size_t in_len, const ConvDims& d);
// x: [N, C_in, L], w: [C_out, C_in, K], b: [C_out] -> [N, C_out, L_out]
Var conv1d(const Var& x, const Var& w, const Var& b, const ConvDims& dims);

// Non-overlapping when stride == kernel; ties resolve to the earliest index.
Var max_pool1d(const Var& x, std::size_t kernel, std::size_t stride);

// Nearest-neighbour resize along the last axis: out[i] = in[i * L_in / L_out].
// out_len == 2 * L_in reproduces plain repeat-by-two upsampling.
Var upsample_nearest(const Var& x, std::size_t out_len);

// [N, C, L] -> [N, C], mean over L.
Var global_avg_pool(const Var& x);

// Eq-style shrinkage with a per-(sample, channel) threshold.
// x: [N, C, L], tau: [N, C] (all entries must be >= 0).
// y = x - tau for x > tau, x + tau for x < -tau, 0 inside the dead zone.
// d y/d x is 1 outside the dead zone and 0 inside; d y/d tau is -sign(x)
// outside and 0 inside.
Var soft_threshold(const Var& x, const Var& tau);

// Batch normalization over axis 1 (channels); reduces over every other axis.
// Train mode uses batch statistics (population variance) and reports them so
// the layer can update its running estimates; eval mode uses the running
// statistics passed in.
struct BatchNormOut {
    Var y;
    Tensor batch_mean;  // per channel, only meaningful in train mode
    Tensor batch_var;
};
BatchNormOut batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps, bool train,
                        const Tensor& running_mean, const Tensor& running_var);

// ------------------------------------------------------------ quantization
// z_e: [N, D, P], embeddings: [K, D]. Each (sample, position) column snaps to
// its nearest code by L2 (ties -> lowest index). Gradients flow into the
// selected embedding rows only; none reach z_e through the argmin.
struct VqOut {
    Var z_q;                   // [N, D, P]
    std::vector<int> indices;  // N*P, row-major by (n, p)
};
VqOut vq_quantize(const Var& z_e, const Var& embeddings);

// z_e + detach(z_q - z_e): the decoder sees quantized values while encoder
// gradients pass straight through.
Var straight_through(const Var& z_e, const Var& z_q);

}  // namespace rulkit::ad
