#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "star/matrix.hpp"
#include "star/rng.hpp"

namespace star {

enum class Mode { Train, Eval };
enum class LossKind { Squared, CrossEntropy };

// Architecture (L, p): L hidden layers, widths p_0..p_{L+1}.
struct NetworkSpec {
    int depth = 0;                // L
    std::vector<int> widths;      // length L+2
    double dropout_prob = 0.0;    // [0, 1)
    bool use_batch_norm = false;

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }

    void validate() const {
        if (depth < 0) throw ShapeError("NetworkSpec: depth must be >= 0");
        if (static_cast<int>(widths.size()) != depth + 2)
            throw ShapeError("NetworkSpec: widths must have L+2 entries");
        for (int w : widths)
            if (w < 1) throw ShapeError("NetworkSpec: every width must be >= 1");
        if (dropout_prob < 0.0 || dropout_prob >= 1.0)
            throw ConfigError("NetworkSpec: dropout_prob must lie in [0,1)");
    }

    std::size_t weight_entries() const {
        std::size_t total = 0;
        for (int j = 0; j <= depth; ++j)
            total += static_cast<std::size_t>(widths[j + 1]) * widths[j];
        return total;
    }

    std::size_t shift_entries() const {
        std::size_t total = 0;
        for (int j = 1; j <= depth; ++j) total += widths[j];
        return total;
    }

    std::size_t total_entries() const { return weight_entries() + shift_entries(); }
};

// Weights W_0..W_L, shifts v_1..v_L and batch-norm running statistics.
template <typename T>
struct NetParams {
    std::vector<Mat<T>> weights;           // W_j: p_{j+1} x p_j
    std::vector<std::vector<T>> shifts;    // v_j: p_j (index j-1)
    std::vector<std::vector<T>> bn_mean;   // per hidden layer, length p_j
    std::vector<std::vector<T>> bn_var;

    bool shape_matches(const NetworkSpec& spec) const {
        if (static_cast<int>(weights.size()) != spec.depth + 1) return false;
        for (int j = 0; j <= spec.depth; ++j)
            if (weights[j].rows != static_cast<std::size_t>(spec.widths[j + 1]) ||
                weights[j].cols != static_cast<std::size_t>(spec.widths[j]))
                return false;
        if (static_cast<int>(shifts.size()) != spec.depth) return false;
        for (int j = 1; j <= spec.depth; ++j)
            if (shifts[j - 1].size() != static_cast<std::size_t>(spec.widths[j])) return false;
        if (spec.use_batch_norm) {
            if (static_cast<int>(bn_mean.size()) != spec.depth ||
                static_cast<int>(bn_var.size()) != spec.depth)
                return false;
        }
        return true;
    }
};

using NetParamsD = NetParams<double>;
using NetParamsF = NetParams<float>;

constexpr double kBnMomentum = 0.1;
constexpr double kBnVarFloor = 1e-5;

template <typename T>
NetParams<T> zero_params(const NetworkSpec& spec) {
    spec.validate();
    NetParams<T> p;
    for (int j = 0; j <= spec.depth; ++j)
        p.weights.emplace_back(spec.widths[j + 1], spec.widths[j], T(0));
    for (int j = 1; j <= spec.depth; ++j)
        p.shifts.emplace_back(spec.widths[j], T(0));
    if (spec.use_batch_norm) {
        for (int j = 1; j <= spec.depth; ++j) {
            p.bn_mean.emplace_back(spec.widths[j], T(0));
            p.bn_var.emplace_back(spec.widths[j], T(1));
        }
    }
    return p;
}

// Default (untrained) initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
// on weights and shifts, running stats at (0, 1).
template <typename T>
NetParams<T> init_params(const NetworkSpec& spec, Rng& rng) {
    NetParams<T> p = zero_params<T>(spec);
    for (int j = 0; j <= spec.depth; ++j) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[j]));
        for (T& w : p.weights[j].data) w = static_cast<T>(rng.uniform(-bound, bound));
    }
    for (int j = 1; j <= spec.depth; ++j) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[j - 1]));
        for (T& v : p.shifts[j - 1]) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    return p;
}

// V = prod_l (p_l + 1)
inline double v_constant(const NetworkSpec& spec) {
    spec.validate();
    double v = 1.0;
    for (int w : spec.widths) {
        v *= static_cast<double>(w) + 1.0;
        if (!std::isfinite(v)) throw NumericError("v_constant overflow");
    }
    return v;
}

inline double sup_norm_bound(const NetworkSpec& spec) {
    return v_constant(spec) * (spec.depth + 1);
}

template <typename T>
double max_entry_norm(const NetParams<T>& params) {
    double m = 0.0;
    for (const auto& w : params.weights)
        for (const T& x : w.data) m = std::max(m, std::abs(static_cast<double>(x)));
    for (const auto& v : params.shifts)
        for (const T& x : v) m = std::max(m, std::abs(static_cast<double>(x)));
    return m;
}

template <typename T>
std::size_t sparsity_count(const NetParams<T>& params, double tol) {
    if (tol < 0.0) throw ConfigError("sparsity_count: tol must be >= 0");
    std::size_t count = 0;
    for (const auto& w : params.weights)
        for (const T& x : w.data)
            if (std::abs(static_cast<double>(x)) > tol) ++count;
    for (const auto& v : params.shifts)
        for (const T& x : v)
            if (std::abs(static_cast<double>(x)) > tol) ++count;
    return count;
}

struct SparsityReport {
    std::size_t active_entries = 0;
    double max_entry = 0.0;
};

template <typename T>
SparsityReport sparsity_report(const NetParams<T>& params, double tol = 0.0) {
    return SparsityReport{sparsity_count(params, tol), max_entry_norm(params)};
}

// Clamp every weight/shift entry to [-1, 1]; running stats untouched.
template <typename T>
NetParams<T> project_to_class(NetParams<T> params) {
    auto clamp1 = [](T x) { return std::clamp(x, T(-1), T(1)); };
    for (auto& w : params.weights)
        for (T& x : w.data) x = clamp1(x);
    for (auto& v : params.shifts)
        for (T& x : v) x = clamp1(x);
    return params;
}

// Uniform member of F(L, p, s): s uniformly chosen positions, entries U[-1,1].
template <typename T>
NetParams<T> sample_sparse_network(const NetworkSpec& spec, std::size_t s, Rng& rng) {
    const std::size_t total = spec.total_entries();
    if (s > total) throw ConfigError("sample_sparse_network: s exceeds parameter count");
    NetParams<T> p = zero_params<T>(spec);

    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first s slots end up a uniform subset.
    for (std::size_t i = 0; i < s; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
        std::swap(idx[i], idx[j]);
    }

    auto place = [&](std::size_t flat, T value) {
        for (auto& w : p.weights) {
            if (flat < w.data.size()) { w.data[flat] = value; return; }
            flat -= w.data.size();
        }
        for (auto& v : p.shifts) {
            if (flat < v.size()) { v[flat] = value; return; }
            flat -= v.size();
        }
    };
    for (std::size_t i = 0; i < s; ++i)
        place(idx[i], static_cast<T>(rng.uniform(-1.0, 1.0)));
    return p;
}

// Intermediates captured by the batch forward pass for backprop.
template <typename T>
struct ForwardCache {
    std::vector<Mat<T>> acts;        // a_0..a_L (inputs to each linear layer)
    std::vector<Mat<T>> pre;         // z_1..z_{L+1}
    std::vector<Mat<T>> relu;        // sigma_v(z_j), before BN/dropout (hidden only)
    std::vector<Mat<T>> bn_xhat;     // normalized activations (hidden, BN on)
    std::vector<std::vector<T>> bn_invstd;
    std::vector<std::vector<uint8_t>> bn_active;  // var above floor?
    std::vector<Mat<T>> drop_scale;  // 0 or 1/(1-p); empty when dropout off
    bool train = false;
};

namespace detail {

// Z = A * W^T; rows of A and W are contiguous.
template <typename T>
void linear_forward(const Mat<T>& A, const Mat<T>& W, Mat<T>& Z) {
    const std::size_t B = A.rows, in = A.cols, out = W.rows;
    Z.rows = B; Z.cols = out; Z.data.assign(B * out, T(0));
    for (std::size_t b = 0; b < B; ++b) {
        const T* a = A.row(b);
        T* z = Z.row(b);
        for (std::size_t o = 0; o < out; ++o) {
            const T* w = W.row(o);
            T acc = T(0);
            for (std::size_t k = 0; k < in; ++k) acc += a[k] * w[k];
            z[o] = acc;
        }
    }
}

// dA = dZ * W, dW += dZ^T * A
template <typename T>
void linear_backward(const Mat<T>& A, const Mat<T>& W, const Mat<T>& dZ,
                     Mat<T>& dA, Mat<T>& dW) {
    const std::size_t B = A.rows, in = A.cols, out = W.rows;
    dA.rows = B; dA.cols = in; dA.data.assign(B * in, T(0));
    for (std::size_t b = 0; b < B; ++b) {
        const T* a = A.row(b);
        const T* dz = dZ.row(b);
        T* da = dA.row(b);
        for (std::size_t o = 0; o < out; ++o) {
            const T g = dz[o];
            if (g == T(0)) continue;
            const T* w = W.row(o);
            T* dw = dW.row(o);
            for (std::size_t k = 0; k < in; ++k) {
                da[k] += g * w[k];
                dw[k] += g * a[k];
            }
        }
    }
}

}  // namespace detail

// Batch forward pass. Train mode draws dropout masks from `rng` and
// normalizes with batch statistics; eval mode is deterministic and uses the
// running statistics. `update_running` folds batch statistics into the
// running ones (training loops only).
template <typename T>
Mat<T> batch_forward(const NetworkSpec& spec, NetParams<T>& params, const Mat<T>& X,
                     Mode mode, Rng* rng = nullptr, ForwardCache<T>* cache = nullptr,
                     bool update_running = false) {
    if (X.cols != static_cast<std::size_t>(spec.input_dim()))
        throw ShapeError("batch_forward: input width " + std::to_string(X.cols) +
                         " != p_0 = " + std::to_string(spec.input_dim()));
    if (!params.shape_matches(spec)) throw ShapeError("batch_forward: params do not match spec");
    const bool train = (mode == Mode::Train);
    const bool drop = train && spec.dropout_prob > 0.0;
    if (drop && rng == nullptr)
        throw ConfigError("batch_forward: train mode with dropout requires an rng");

    const std::size_t B = X.rows;
    if (cache) {
        cache->acts.clear(); cache->pre.clear(); cache->relu.clear();
        cache->bn_xhat.clear(); cache->bn_invstd.clear(); cache->bn_active.clear();
        cache->drop_scale.clear();
        cache->train = train;
    }

    Mat<T> a = X;
    if (cache) cache->acts.push_back(a);

    for (int j = 0; j < spec.depth; ++j) {
        Mat<T> z;
        detail::linear_forward(a, params.weights[j], z);
        if (cache) cache->pre.push_back(z);

        // shifted ReLU: max(z_k - v_k, 0)
        const std::vector<T>& v = params.shifts[j];
        Mat<T> r(z.rows, z.cols);
        for (std::size_t b = 0; b < B; ++b) {
            const T* zr = z.row(b);
            T* rr = r.row(b);
            for (std::size_t k = 0; k < z.cols; ++k) {
                const T u = zr[k] - v[k];
                rr[k] = u > T(0) ? u : T(0);
            }
        }
        if (cache) cache->relu.push_back(r);

        Mat<T> h = r;
        if (spec.use_batch_norm) {
            const std::size_t p = h.cols;
            std::vector<T> mean(p, T(0)), var(p, T(0));
            if (train && B > 1) {
                for (std::size_t b = 0; b < B; ++b) {
                    const T* hr = h.row(b);
                    for (std::size_t k = 0; k < p; ++k) mean[k] += hr[k];
                }
                for (std::size_t k = 0; k < p; ++k) mean[k] /= static_cast<T>(B);
                for (std::size_t b = 0; b < B; ++b) {
                    const T* hr = h.row(b);
                    for (std::size_t k = 0; k < p; ++k) {
                        const T d = hr[k] - mean[k];
                        var[k] += d * d;
                    }
                }
                for (std::size_t k = 0; k < p; ++k) var[k] /= static_cast<T>(B);
                if (update_running) {
                    for (std::size_t k = 0; k < p; ++k) {
                        params.bn_mean[j][k] = static_cast<T>((1.0 - kBnMomentum) *
                                               params.bn_mean[j][k] + kBnMomentum * mean[k]);
                        params.bn_var[j][k] = static_cast<T>((1.0 - kBnMomentum) *
                                              params.bn_var[j][k] + kBnMomentum * var[k]);
                    }
                }
            } else {
                // eval, or a train batch of one: running statistics
                mean = params.bn_mean[j];
                var = params.bn_var[j];
            }
            std::vector<T> invstd(p);
            std::vector<uint8_t> active(p);
            for (std::size_t k = 0; k < p; ++k) {
                const double vk = std::max(static_cast<double>(var[k]), kBnVarFloor);
                active[k] = static_cast<double>(var[k]) > kBnVarFloor ? 1 : 0;
                invstd[k] = static_cast<T>(1.0 / std::sqrt(vk));
            }
            for (std::size_t b = 0; b < B; ++b) {
                T* hr = h.row(b);
                for (std::size_t k = 0; k < p; ++k) hr[k] = (hr[k] - mean[k]) * invstd[k];
            }
            if (cache) {
                cache->bn_xhat.push_back(h);
                cache->bn_invstd.push_back(std::move(invstd));
                cache->bn_active.push_back(std::move(active));
            }
        }

        if (drop) {
            const T scale = static_cast<T>(1.0 / (1.0 - spec.dropout_prob));
            Mat<T> mask(h.rows, h.cols);
            for (std::size_t i = 0; i < mask.data.size(); ++i)
                mask.data[i] = rng->bernoulli(spec.dropout_prob) ? T(0) : scale;
            for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] *= mask.data[i];
            if (cache) cache->drop_scale.push_back(std::move(mask));
        }

        a = std::move(h);
        if (cache) cache->acts.push_back(a);
    }

    Mat<T> out;
    detail::linear_forward(a, params.weights[spec.depth], out);
    if (cache) cache->pre.push_back(out);
    return out;
}

// Single-sample forward. In train mode batch norm keeps the running
// statistics (a single sample carries none of its own).
template <typename T>
std::vector<T> mlp_forward(const NetworkSpec& spec, NetParams<T>& params,
                           const std::vector<T>& x, Mode mode = Mode::Eval,
                           Rng* rng = nullptr) {
    if (x.size() != static_cast<std::size_t>(spec.input_dim()))
        throw ShapeError("mlp_forward: input length != p_0");
    Mat<T> X(1, x.size());
    std::copy(x.begin(), x.end(), X.data.begin());
    Mat<T> out = batch_forward(spec, params, X, mode, rng);
    return std::vector<T>(out.data.begin(), out.data.end());
}

template <typename T>
struct Gradients {
    std::vector<Mat<T>> weights;
    std::vector<std::vector<T>> shifts;
};

template <typename T>
Gradients<T> zero_gradients(const NetworkSpec& spec) {
    Gradients<T> g;
    for (int j = 0; j <= spec.depth; ++j)
        g.weights.emplace_back(spec.widths[j + 1], spec.widths[j], T(0));
    for (int j = 1; j <= spec.depth; ++j)
        g.shifts.emplace_back(spec.widths[j], T(0));
    return g;
}

// Mean batch loss and its value; throws NumericError naming the first
// offending sample when a per-sample loss is non-finite.
template <typename T>
double batch_loss_from_output(const Mat<T>& out, const Mat<T>& targets,
                              const std::vector<int>& labels, LossKind loss) {
    const std::size_t B = out.rows;
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        double sample = 0.0;
        if (loss == LossKind::Squared) {
            const T* o = out.row(b);
            const T* y = targets.row(b);
            for (std::size_t k = 0; k < out.cols; ++k) {
                const double d = static_cast<double>(o[k]) - static_cast<double>(y[k]);
                sample += d * d;
            }
        } else {
            const T* o = out.row(b);
            double mx = static_cast<double>(o[0]);
            for (std::size_t k = 1; k < out.cols; ++k)
                mx = std::max(mx, static_cast<double>(o[k]));
            double denom = 0.0;
            for (std::size_t k = 0; k < out.cols; ++k)
                denom += std::exp(static_cast<double>(o[k]) - mx);
            const int y = labels[b];
            sample = -(static_cast<double>(o[y]) - mx - std::log(denom));
        }
        if (!std::isfinite(sample))
            throw NumericError("non-finite loss at batch index " + std::to_string(b));
        total += sample;
    }
    return total / static_cast<double>(B);
}

// Backward pass from a gradient w.r.t. the network output, accumulating
// into `grads`. The cache must come from the matching batch_forward call.
template <typename T>
void backward_pass(const NetworkSpec& spec, const NetParams<T>& params,
                   const ForwardCache<T>& cache, const Mat<T>& dOut, Gradients<T>& grads) {
    const std::size_t B = cache.acts[0].rows;
    Mat<T> dA;
    detail::linear_backward(cache.acts[spec.depth], params.weights[spec.depth], dOut, dA,
                            grads.weights[spec.depth]);

    for (int j = spec.depth - 1; j >= 0; --j) {
        Mat<T>& dH = dA;  // grad w.r.t. a_{j+1} (post dropout)

        if (cache.train && !cache.drop_scale.empty()) {
            const Mat<T>& m = cache.drop_scale[j];
            for (std::size_t i = 0; i < dH.data.size(); ++i) dH.data[i] *= m.data[i];
        }

        if (spec.use_batch_norm) {
            const std::vector<T>& invstd = cache.bn_invstd[j];
            const std::vector<uint8_t>& active = cache.bn_active[j];
            const Mat<T>& xhat = cache.bn_xhat[j];
            const std::size_t p = dH.cols;
            if (cache.train && B > 1) {
                std::vector<T> sum_dy(p, T(0)), sum_dyx(p, T(0));
                for (std::size_t b = 0; b < B; ++b) {
                    const T* dy = dH.row(b);
                    const T* xh = xhat.row(b);
                    for (std::size_t k = 0; k < p; ++k) {
                        sum_dy[k] += dy[k];
                        sum_dyx[k] += dy[k] * xh[k];
                    }
                }
                const T invB = static_cast<T>(1.0 / static_cast<double>(B));
                for (std::size_t b = 0; b < B; ++b) {
                    T* dy = dH.row(b);
                    const T* xh = xhat.row(b);
                    for (std::size_t k = 0; k < p; ++k) {
                        // variance path only when the batch variance is above the floor
                        const T corr = active[k] ? xh[k] * sum_dyx[k] * invB : T(0);
                        dy[k] = invstd[k] * (dy[k] - sum_dy[k] * invB - corr);
                    }
                }
            } else {
                for (std::size_t b = 0; b < B; ++b) {
                    T* dy = dH.row(b);
                    for (std::size_t k = 0; k < p; ++k) dy[k] *= invstd[k];
                }
            }
        }

        // shifted ReLU
        const Mat<T>& z = cache.pre[j];
        const std::vector<T>& v = params.shifts[j];
        std::vector<T>& dv = grads.shifts[j];
        for (std::size_t b = 0; b < B; ++b) {
            T* dy = dH.row(b);
            const T* zr = z.row(b);
            for (std::size_t k = 0; k < z.cols; ++k) {
                if (zr[k] - v[k] > T(0)) {
                    dv[k] -= dy[k];
                } else {
                    dy[k] = T(0);
                }
            }
        }

        Mat<T> dPrev;
        detail::linear_backward(cache.acts[j], params.weights[j], dH, dPrev, grads.weights[j]);
        dA = std::move(dPrev);
    }
}

// Gradients of the mean batch loss w.r.t. every weight and shift.
// `mode` selects the graph the gradients follow (dropout masks and batch
// statistics in train mode; running statistics in eval mode).
template <typename T>
struct BackpropResult {
    Gradients<T> grads;
    double loss = 0.0;
    Mat<T> output;
};

template <typename T>
BackpropResult<T> backprop(const NetworkSpec& spec, NetParams<T>& params, const Mat<T>& X,
                           const Mat<T>& targets, const std::vector<int>& labels,
                           LossKind loss, Mode mode = Mode::Eval, Rng* rng = nullptr,
                           bool update_running = false) {
    if (X.rows == 0) throw ShapeError("backprop: empty batch");
    if (loss == LossKind::Squared) {
        if (targets.rows != X.rows ||
            targets.cols != static_cast<std::size_t>(spec.output_dim()))
            throw ShapeError("backprop: target shape mismatch");
    } else {
        if (labels.size() != X.rows) throw ShapeError("backprop: label count mismatch");
        for (int y : labels)
            if (y < 0 || y >= spec.output_dim())
                throw ShapeError("backprop: class index out of range");
    }

    ForwardCache<T> cache;
    Mat<T> out = batch_forward(spec, params, X, mode, rng, &cache, update_running);
    const std::size_t B = X.rows;

    BackpropResult<T> res;
    res.loss = batch_loss_from_output(out, targets, labels, loss);
    res.grads = zero_gradients<T>(spec);

    // dLoss/dOut
    Mat<T> dZ(out.rows, out.cols);
    if (loss == LossKind::Squared) {
        const T inv = static_cast<T>(1.0 / static_cast<double>(B));
        for (std::size_t i = 0; i < out.data.size(); ++i)
            dZ.data[i] = T(2) * (out.data[i] - targets.data[i]) * inv;
    } else {
        for (std::size_t b = 0; b < B; ++b) {
            const T* o = out.row(b);
            T* d = dZ.row(b);
            double mx = static_cast<double>(o[0]);
            for (std::size_t k = 1; k < out.cols; ++k)
                mx = std::max(mx, static_cast<double>(o[k]));
            double denom = 0.0;
            for (std::size_t k = 0; k < out.cols; ++k)
                denom += std::exp(static_cast<double>(o[k]) - mx);
            for (std::size_t k = 0; k < out.cols; ++k) {
                const double p = std::exp(static_cast<double>(o[k]) - mx) / denom;
                d[k] = static_cast<T>((p - (static_cast<int>(k) == labels[b] ? 1.0 : 0.0)) /
                                      static_cast<double>(B));
            }
        }
    }
    res.output = out;
    backward_pass(spec, params, cache, dZ, res.grads);
    return res;
}

}  // namespace star
