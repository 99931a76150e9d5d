#include "rulkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>
#include <utility>

#include "rulkit/errors.hpp"

namespace rulkit::ad {

namespace {

Var make_node(Tensor value, std::vector<Var> parents) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    auto n = std::make_shared<Node>(std::move(value), req);
    n->parents = std::move(parents);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw ShapeError(std::string(op) + ": shape mismatch " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
}

// Product of dims [from, end).
std::size_t tail_size(const Tensor& t, std::size_t from) {
    std::size_t n = 1;
    for (std::size_t i = from; i < t.ndim(); ++i) n *= t.dim(i);
    return n;
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
    return std::make_shared<Node>(std::move(value), requires_grad);
}

Var constant(Tensor value) { return std::make_shared<Node>(std::move(value), false); }

void backward(const Var& loss) {
    if (!loss) throw ContractError("backward: null loss node");
    if (!loss->value.is_scalar())
        throw ContractError("backward: loss must be scalar, got " + loss->value.shape_str());

    // Iterative post-order DFS for the topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Node* child = node->parents[next_child].get();
            ++next_child;
            if (visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) n->ensure_grad();
    loss->grad.fill(0.0);
    loss->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad) n->backprop(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad)
        n->backprop = [a, b](Node& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
            }
        };
    return n;
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad)
        n->backprop = [a, b](Node& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
            }
        };
    return n;
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    Var n = make_node(std::move(out), {a, b});
    if (n->requires_grad)
        n->backprop = [a, b](Node& self) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    a->grad[i] += self.grad[i] * b->value[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    b->grad[i] += self.grad[i] * a->value[i];
            }
        };
    return n;
}

Var scale(const Var& a, double k) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * k;
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad)
        n->backprop = [a, k](Node& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * k;
        };
    return n;
}

Var relu(const Var& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad)
        n->backprop = [a](Node& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (a->value[i] > 0.0) a->grad[i] += self.grad[i];
        };
    return n;
}

Var leaky_relu(const Var& a, double negative_slope) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a->value[i];
        out[i] = x > 0.0 ? x : negative_slope * x;
    }
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad)
        n->backprop = [a, negative_slope](Node& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                a->grad[i] += self.grad[i] * (a->value[i] > 0.0 ? 1.0 : negative_slope);
        };
    return n;
}

Var sigmoid(const Var& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a->value[i]));
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad)
        n->backprop = [a](Node& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double y = self.value[i];
                a->grad[i] += self.grad[i] * y * (1.0 - y);
            }
        };
    return n;
}

Var abs(const Var& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a->value[i]);
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad)
        n->backprop = [a](Node& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double x = a->value[i];
                a->grad[i] += self.grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
            }
        };
    return n;
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
    Var n = make_node(Tensor::scalar(s), {a});
    if (n->requires_grad)
        n->backprop = [a](Node& self) {
            a->ensure_grad();
            const double g = self.grad[0];
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
        };
    return n;
}

Var mean(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->value.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
    Var n = make_node(Tensor::scalar(s * inv), {a});
    if (n->requires_grad)
        n->backprop = [a, inv](Node& self) {
            a->ensure_grad();
            const double g = self.grad[0] * inv;
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
        };
    return n;
}

Var sum_squares(const Var& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value[i] * a->value[i];
    Var n = make_node(Tensor::scalar(s), {a});
    if (n->requires_grad)
        n->backprop = [a](Node& self) {
            a->ensure_grad();
            const double g = self.grad[0];
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g * 2.0 * a->value[i];
        };
    return n;
}

Var mse(const Var& pred, const Var& target) {
    check_same_shape(pred, target, "mse");
    const double inv = 1.0 / static_cast<double>(pred->value.size());
    double s = 0.0;
    for (std::size_t i = 0; i < pred->value.size(); ++i) {
        const double d = pred->value[i] - target->value[i];
        s += d * d;
    }
    Var n = make_node(Tensor::scalar(s * inv), {pred, target});
    if (n->requires_grad)
        n->backprop = [pred, target, inv](Node& self) {
            const double g = self.grad[0] * 2.0 * inv;
            if (pred->requires_grad) {
                pred->ensure_grad();
                for (std::size_t i = 0; i < pred->grad.size(); ++i)
                    pred->grad[i] += g * (pred->value[i] - target->value[i]);
            }
            if (target->requires_grad) {
                target->ensure_grad();
                for (std::size_t i = 0; i < target->grad.size(); ++i)
                    target->grad[i] -= g * (pred->value[i] - target->value[i]);
            }
        };
    return n;
}

// ---------------------------------------------------------------- structure

Var detach(const Var& a) { return constant(a->value); }

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    Var n = make_node(std::move(out), {a});
    if (n->requires_grad)
        n->backprop = [a](Node& self) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        };
    return n;
}

// ------------------------------------------------------------------- layers

Var dense(const Var& x, const Var& w, const Var& b) {
    if (x->value.ndim() != 2 || w->value.ndim() != 2 || b->value.ndim() != 1)
        throw ShapeError("dense: expected x=[N,F_in], w=[F_out,F_in], b=[F_out]");
    const std::size_t n_rows = x->value.dim(0);
    const std::size_t f_in = x->value.dim(1);
    const std::size_t f_out = w->value.dim(0);
    if (w->value.dim(1) != f_in || b->value.dim(0) != f_out)
        throw ShapeError("dense: inconsistent dimensions");

    Tensor out({n_rows, f_out});
    const double* xv = x->value.data();
    const double* wv = w->value.data();
    const double* bv = b->value.data();
    double* yv = out.data();
    for (std::size_t r = 0; r < n_rows; ++r)
        for (std::size_t o = 0; o < f_out; ++o) {
            double acc = bv[o];
            const double* xr = xv + r * f_in;
            const double* wr = wv + o * f_in;
            for (std::size_t i = 0; i < f_in; ++i) acc += wr[i] * xr[i];
            yv[r * f_out + o] = acc;
        }

    Var n = make_node(std::move(out), {x, w, b});
    if (n->requires_grad)
        n->backprop = [x, w, b, n_rows, f_in, f_out](Node& self) {
            const double* g = self.grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                double* gx = x->grad.data();
                const double* wv = w->value.data();
                for (std::size_t r = 0; r < n_rows; ++r)
                    for (std::size_t o = 0; o < f_out; ++o) {
                        const double go = g[r * f_out + o];
                        const double* wr = wv + o * f_in;
                        double* gxr = gx + r * f_in;
                        for (std::size_t i = 0; i < f_in; ++i) gxr[i] += go * wr[i];
                    }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                double* gw = w->grad.data();
                const double* xv = x->value.data();
                for (std::size_t r = 0; r < n_rows; ++r)
                    for (std::size_t o = 0; o < f_out; ++o) {
                        const double go = g[r * f_out + o];
                        const double* xr = xv + r * f_in;
                        double* gwr = gw + o * f_in;
                        for (std::size_t i = 0; i < f_in; ++i) gwr[i] += go * xr[i];
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                double* gb = b->grad.data();
                for (std::size_t r = 0; r < n_rows; ++r)
                    for (std::size_t o = 0; o < f_out; ++o) gb[o] += g[r * f_out + o];
            }
        };
    return n;
}

std::size_t conv_out_len(std::size_t in_len, const ConvDims& d) {
    const std::int64_t padded =
        static_cast<std::int64_t>(in_len + d.pad_left + d.pad_right);
    const std::int64_t span = static_cast<std::int64_t>(d.dilation * (d.kernel - 1) + 1);
    if (padded < span) throw ShapeError("conv1d: input shorter than dilated kernel");
    return static_cast<std::size_t>((padded - span) / static_cast<std::int64_t>(d.stride)) + 1;
}

Var conv1d(const Var& x, const Var& w, const Var& b, const ConvDims& dims) {
    if (x->value.ndim() != 3 || w->value.ndim() != 3 || b->value.ndim() != 1)
        throw ShapeError("conv1d: expected x=[N,C_in,L], w=[C_out,C_in,K], b=[C_out]");
    const std::size_t batch = x->value.dim(0);
    const std::size_t c_in = x->value.dim(1);
    const std::size_t len = x->value.dim(2);
    const std::size_t c_out = w->value.dim(0);
    const std::size_t kernel = w->value.dim(2);
    if (w->value.dim(1) != c_in || b->value.dim(0) != c_out || kernel != dims.kernel)
        throw ShapeError("conv1d: inconsistent dimensions");
    const std::size_t out_len = conv_out_len(len, dims);

    const std::int64_t stride = static_cast<std::int64_t>(dims.stride);
    const std::int64_t dil = static_cast<std::int64_t>(dims.dilation);
    const std::int64_t pad = static_cast<std::int64_t>(dims.pad_left);
    const std::int64_t sig_len = static_cast<std::int64_t>(len);
    const std::int64_t n_out = static_cast<std::int64_t>(out_len);

    // Valid output range for tap i: 0 <= t*stride + dil*i - pad < len.
    auto tap_range = [=](std::size_t i, std::int64_t& t_lo, std::int64_t& t_hi) {
        const std::int64_t off = dil * static_cast<std::int64_t>(i) - pad;
        t_lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
        const std::int64_t max_t = (sig_len - 1 - off) / stride;
        t_hi = std::min(n_out - 1, max_t) + 1;
        if (t_hi < t_lo) t_hi = t_lo;
    };

    Tensor out({batch, c_out, out_len});
    {
        const double* xv = x->value.data();
        const double* wv = w->value.data();
        const double* bv = b->value.data();
        double* yv = out.data();
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t co = 0; co < c_out; ++co) {
                double* yr = yv + (n * c_out + co) * out_len;
                for (std::size_t t = 0; t < out_len; ++t) yr[t] = bv[co];
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const double* xr = xv + (n * c_in + ci) * len;
                    const double* wr = wv + (co * c_in + ci) * kernel;
                    for (std::size_t i = 0; i < kernel; ++i) {
                        const double wk = wr[i];
                        if (wk == 0.0) continue;
                        std::int64_t t_lo, t_hi;
                        tap_range(i, t_lo, t_hi);
                        const std::int64_t off = dil * static_cast<std::int64_t>(i) - pad;
                        for (std::int64_t t = t_lo; t < t_hi; ++t)
                            yr[t] += wk * xr[t * stride + off];
                    }
                }
            }
    }

    Var node = make_node(std::move(out), {x, w, b});
    if (node->requires_grad)
        node->backprop = [x, w, b, batch, c_in, len, c_out, kernel, out_len, stride, tap_range,
                          dil, pad](Node& self) {
            const double* g = self.grad.data();
            const bool need_x = x->requires_grad;
            const bool need_w = w->requires_grad;
            const bool need_b = b->requires_grad;
            if (need_x) x->ensure_grad();
            if (need_w) w->ensure_grad();
            if (need_b) b->ensure_grad();
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t co = 0; co < c_out; ++co) {
                    const double* gr = g + (n * c_out + co) * out_len;
                    if (need_b) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < out_len; ++t) acc += gr[t];
                        b->grad[co] += acc;
                    }
                    for (std::size_t ci = 0; ci < c_in; ++ci) {
                        const double* xr = x->value.data() + (n * c_in + ci) * len;
                        const double* wr = w->value.data() + (co * c_in + ci) * kernel;
                        double* gxr = need_x ? x->grad.data() + (n * c_in + ci) * len : nullptr;
                        double* gwr =
                            need_w ? w->grad.data() + (co * c_in + ci) * kernel : nullptr;
                        for (std::size_t i = 0; i < kernel; ++i) {
                            std::int64_t t_lo, t_hi;
                            tap_range(i, t_lo, t_hi);
                            const std::int64_t off = dil * static_cast<std::int64_t>(i) - pad;
                            if (need_w) {
                                double acc = 0.0;
                                for (std::int64_t t = t_lo; t < t_hi; ++t)
                                    acc += gr[t] * xr[t * stride + off];
                                gwr[i] += acc;
                            }
                            if (need_x) {
                                const double wk = wr[i];
                                if (wk == 0.0) continue;
                                for (std::int64_t t = t_lo; t < t_hi; ++t)
                                    gxr[t * stride + off] += gr[t] * wk;
                            }
                        }
                    }
                }
        };
    return node;
}

Var max_pool1d(const Var& x, std::size_t kernel, std::size_t stride) {
    if (x->value.ndim() != 3) throw ShapeError("max_pool1d: expected [N,C,L]");
    if (kernel == 0 || stride == 0) throw ShapeError("max_pool1d: kernel/stride must be positive");
    const std::size_t batch = x->value.dim(0);
    const std::size_t chans = x->value.dim(1);
    const std::size_t len = x->value.dim(2);
    if (len < kernel) throw ShapeError("max_pool1d: input shorter than kernel");
    const std::size_t out_len = (len - kernel) / stride + 1;

    Tensor out({batch, chans, out_len});
    auto argmax = std::make_shared<std::vector<std::size_t>>(batch * chans * out_len);
    {
        const double* xv = x->value.data();
        double* yv = out.data();
        std::size_t o = 0;
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t c = 0; c < chans; ++c) {
                const double* xr = xv + (n * chans + c) * len;
                for (std::size_t t = 0; t < out_len; ++t, ++o) {
                    const std::size_t start = t * stride;
                    double best = xr[start];
                    std::size_t best_i = start;
                    for (std::size_t k = 1; k < kernel; ++k)
                        if (xr[start + k] > best) {
                            best = xr[start + k];
                            best_i = start + k;
                        }
                    yv[o] = best;
                    (*argmax)[o] = (n * chans + c) * len + best_i;
                }
            }
    }

    Var node = make_node(std::move(out), {x});
    if (node->requires_grad)
        node->backprop = [x, argmax](Node& self) {
            x->ensure_grad();
            for (std::size_t o = 0; o < self.grad.size(); ++o)
                x->grad[(*argmax)[o]] += self.grad[o];
        };
    return node;
}

Var upsample_nearest(const Var& x, std::size_t out_len) {
    if (x->value.ndim() != 3) throw ShapeError("upsample_nearest: expected [N,C,L]");
    if (out_len == 0) throw ShapeError("upsample_nearest: out_len must be positive");
    const std::size_t batch = x->value.dim(0);
    const std::size_t chans = x->value.dim(1);
    const std::size_t len = x->value.dim(2);

    Tensor out({batch, chans, out_len});
    {
        const double* xv = x->value.data();
        double* yv = out.data();
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t c = 0; c < chans; ++c) {
                const double* xr = xv + (n * chans + c) * len;
                double* yr = yv + (n * chans + c) * out_len;
                for (std::size_t t = 0; t < out_len; ++t) yr[t] = xr[t * len / out_len];
            }
    }

    Var node = make_node(std::move(out), {x});
    if (node->requires_grad)
        node->backprop = [x, batch, chans, len, out_len](Node& self) {
            x->ensure_grad();
            const double* g = self.grad.data();
            double* gx = x->grad.data();
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t c = 0; c < chans; ++c) {
                    const double* gr = g + (n * chans + c) * out_len;
                    double* gxr = gx + (n * chans + c) * len;
                    for (std::size_t t = 0; t < out_len; ++t) gxr[t * len / out_len] += gr[t];
                }
        };
    return node;
}

Var global_avg_pool(const Var& x) {
    if (x->value.ndim() != 3) throw ShapeError("global_avg_pool: expected [N,C,L]");
    const std::size_t batch = x->value.dim(0);
    const std::size_t chans = x->value.dim(1);
    const std::size_t len = x->value.dim(2);
    const double inv = 1.0 / static_cast<double>(len);

    Tensor out({batch, chans});
    {
        const double* xv = x->value.data();
        double* yv = out.data();
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t c = 0; c < chans; ++c) {
                const double* xr = xv + (n * chans + c) * len;
                double acc = 0.0;
                for (std::size_t t = 0; t < len; ++t) acc += xr[t];
                yv[n * chans + c] = acc * inv;
            }
    }

    Var node = make_node(std::move(out), {x});
    if (node->requires_grad)
        node->backprop = [x, batch, chans, len, inv](Node& self) {
            x->ensure_grad();
            double* gx = x->grad.data();
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t c = 0; c < chans; ++c) {
                    const double g = self.grad[n * chans + c] * inv;
                    double* gxr = gx + (n * chans + c) * len;
                    for (std::size_t t = 0; t < len; ++t) gxr[t] += g;
                }
        };
    return node;
}

Var soft_threshold(const Var& x, const Var& tau) {
    if (x->value.ndim() < 2) throw ShapeError("soft_threshold: x must be at least [N,C]");
    const std::size_t batch = x->value.dim(0);
    const std::size_t chans = x->value.dim(1);
    if (tau->value.ndim() != 2 || tau->value.dim(0) != batch || tau->value.dim(1) != chans)
        throw ShapeError("soft_threshold: tau must be [N,C] matching x");
    for (std::size_t i = 0; i < tau->value.size(); ++i)
        if (tau->value[i] < 0.0) throw DomainError("soft_threshold: negative threshold");
    const std::size_t len = tail_size(x->value, 2);

    Tensor out(x->value.shape());
    {
        const double* xv = x->value.data();
        const double* tv = tau->value.data();
        double* yv = out.data();
        for (std::size_t nc = 0; nc < batch * chans; ++nc) {
            const double th = tv[nc];
            const double* xr = xv + nc * len;
            double* yr = yv + nc * len;
            for (std::size_t t = 0; t < len; ++t) {
                const double v = xr[t];
                yr[t] = v > th ? v - th : (v < -th ? v + th : 0.0);
            }
        }
    }

    Var node = make_node(std::move(out), {x, tau});
    if (node->requires_grad)
        node->backprop = [x, tau, batch, chans, len](Node& self) {
            const double* g = self.grad.data();
            const double* xv = x->value.data();
            const double* tv = tau->value.data();
            const bool need_x = x->requires_grad;
            const bool need_tau = tau->requires_grad;
            if (need_x) x->ensure_grad();
            if (need_tau) tau->ensure_grad();
            for (std::size_t nc = 0; nc < batch * chans; ++nc) {
                const double th = tv[nc];
                const double* xr = xv + nc * len;
                const double* gr = g + nc * len;
                double tau_acc = 0.0;
                for (std::size_t t = 0; t < len; ++t) {
                    const double v = xr[t];
                    if (v > th) {
                        if (need_x) x->grad[nc * len + t] += gr[t];
                        tau_acc -= gr[t];
                    } else if (v < -th) {
                        if (need_x) x->grad[nc * len + t] += gr[t];
                        tau_acc += gr[t];
                    }
                }
                if (need_tau) tau->grad[nc] += tau_acc;
            }
        };
    return node;
}

BatchNormOut batch_norm(const Var& x, const Var& gamma, const Var& beta, double eps, bool train,
                        const Tensor& running_mean, const Tensor& running_var) {
    if (x->value.ndim() < 2) throw ShapeError("batch_norm: x must be at least [N,C]");
    const std::size_t batch = x->value.dim(0);
    const std::size_t chans = x->value.dim(1);
    const std::size_t len = tail_size(x->value, 2);
    if (gamma->value.size() != chans || beta->value.size() != chans)
        throw ShapeError("batch_norm: gamma/beta must have one entry per channel");
    if (!train && (running_mean.size() != chans || running_var.size() != chans))
        throw ShapeError("batch_norm: running stats must have one entry per channel");

    const std::size_t m = batch * len;  // samples per channel
    Tensor mean_c({chans});
    Tensor var_c({chans});
    if (train) {
        for (std::size_t c = 0; c < chans; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < batch; ++n) {
                const double* xr = x->value.data() + (n * chans + c) * len;
                for (std::size_t t = 0; t < len; ++t) s += xr[t];
            }
            const double mu = s / static_cast<double>(m);
            double sq = 0.0;
            for (std::size_t n = 0; n < batch; ++n) {
                const double* xr = x->value.data() + (n * chans + c) * len;
                for (std::size_t t = 0; t < len; ++t) {
                    const double d = xr[t] - mu;
                    sq += d * d;
                }
            }
            mean_c[c] = mu;
            var_c[c] = sq / static_cast<double>(m);
        }
    } else {
        mean_c = running_mean;
        var_c = running_var;
    }

    // Cache normalized values for the backward pass.
    auto xhat = std::make_shared<Tensor>(x->value.shape());
    Tensor out(x->value.shape());
    {
        double* hv = xhat->data();
        double* yv = out.data();
        const double* xv = x->value.data();
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t c = 0; c < chans; ++c) {
                const double inv_std = 1.0 / std::sqrt(var_c[c] + eps);
                const double mu = mean_c[c];
                const double gm = gamma->value[c];
                const double bt = beta->value[c];
                const std::size_t base = (n * chans + c) * len;
                for (std::size_t t = 0; t < len; ++t) {
                    const double h = (xv[base + t] - mu) * inv_std;
                    hv[base + t] = h;
                    yv[base + t] = gm * h + bt;
                }
            }
    }

    Var node = make_node(std::move(out), {x, gamma, beta});
    if (node->requires_grad) {
        auto var_cache = std::make_shared<Tensor>(var_c);
        node->backprop = [x, gamma, beta, xhat, var_cache, eps, train, batch, chans,
                          len](Node& self) {
            const double* g = self.grad.data();
            const double* hv = xhat->data();
            const std::size_t m = batch * len;
            const bool need_x = x->requires_grad;
            if (need_x) x->ensure_grad();
            if (gamma->requires_grad) gamma->ensure_grad();
            if (beta->requires_grad) beta->ensure_grad();
            for (std::size_t c = 0; c < chans; ++c) {
                double sum_g = 0.0, sum_gh = 0.0;
                for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t base = (n * chans + c) * len;
                    for (std::size_t t = 0; t < len; ++t) {
                        sum_g += g[base + t];
                        sum_gh += g[base + t] * hv[base + t];
                    }
                }
                if (gamma->requires_grad) gamma->grad[c] += sum_gh;
                if (beta->requires_grad) beta->grad[c] += sum_g;
                if (!need_x) continue;
                const double inv_std = 1.0 / std::sqrt((*var_cache)[c] + eps);
                const double gm = gamma->value[c];
                if (train) {
                    const double mean_g = sum_g / static_cast<double>(m);
                    const double mean_gh = sum_gh / static_cast<double>(m);
                    for (std::size_t n = 0; n < batch; ++n) {
                        const std::size_t base = (n * chans + c) * len;
                        for (std::size_t t = 0; t < len; ++t)
                            x->grad[base + t] += gm * inv_std *
                                                 (g[base + t] - mean_g - hv[base + t] * mean_gh);
                    }
                } else {
                    for (std::size_t n = 0; n < batch; ++n) {
                        const std::size_t base = (n * chans + c) * len;
                        for (std::size_t t = 0; t < len; ++t)
                            x->grad[base + t] += gm * inv_std * g[base + t];
                    }
                }
            }
        };
    }
    return BatchNormOut{node, mean_c, var_c};
}

VqOut vq_quantize(const Var& z_e, const Var& embeddings) {
    if (z_e->value.ndim() != 3) throw ShapeError("vq_quantize: z_e must be [N,D,P]");
    if (embeddings->value.ndim() != 2) throw ShapeError("vq_quantize: embeddings must be [K,D]");
    const std::size_t batch = z_e->value.dim(0);
    const std::size_t dim = z_e->value.dim(1);
    const std::size_t positions = z_e->value.dim(2);
    const std::size_t codes = embeddings->value.dim(0);
    if (embeddings->value.dim(1) != dim)
        throw ShapeError("vq_quantize: embedding dimension mismatch");

    std::vector<int> indices(batch * positions);
    Tensor out(z_e->value.shape());
    {
        const double* zv = z_e->value.data();
        const double* ev = embeddings->value.data();
        double* qv = out.data();
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t p = 0; p < positions; ++p) {
                double best = std::numeric_limits<double>::infinity();
                std::size_t best_k = 0;
                for (std::size_t k = 0; k < codes; ++k) {
                    double dist = 0.0;
                    const double* er = ev + k * dim;
                    for (std::size_t d = 0; d < dim; ++d) {
                        const double diff = zv[(n * dim + d) * positions + p] - er[d];
                        dist += diff * diff;
                    }
                    if (dist < best) {  // strict: ties keep the lowest index
                        best = dist;
                        best_k = k;
                    }
                }
                indices[n * positions + p] = static_cast<int>(best_k);
                const double* er = ev + best_k * dim;
                for (std::size_t d = 0; d < dim; ++d)
                    qv[(n * dim + d) * positions + p] = er[d];
            }
    }

    Var node = make_node(std::move(out), {embeddings});
    auto idx = std::make_shared<std::vector<int>>(indices);
    if (node->requires_grad)
        node->backprop = [embeddings, idx, batch, dim, positions](Node& self) {
            embeddings->ensure_grad();
            const double* g = self.grad.data();
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t p = 0; p < positions; ++p) {
                    const std::size_t k = static_cast<std::size_t>((*idx)[n * positions + p]);
                    for (std::size_t d = 0; d < dim; ++d)
                        embeddings->grad[k * dim + d] += g[(n * dim + d) * positions + p];
                }
        };
    return VqOut{node, std::move(indices)};
}

Var straight_through(const Var& z_e, const Var& z_q) {
    check_same_shape(z_e, z_q, "straight_through");
    return add(z_e, detach(sub(z_q, z_e)));
}

}  // namespace rulkit::ad
