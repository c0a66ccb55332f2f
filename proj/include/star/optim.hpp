#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "star/matrix.hpp"
#include "star/net.hpp"

namespace star {

enum class OptKind { Sgd, Adam };

struct OptimizerConfig {
    OptKind kind = OptKind::Adam;
    double lr = 0.001;
    double momentum = 0.0;   // sgd
    double beta1 = 0.9;      // adam
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Flat per-parameter state; the step functions walk weights first, then
// shifts, in layer order.
template <typename T>
struct OptimizerState {
    OptimizerConfig cfg;
    std::int64_t t = 0;
    std::vector<T> m;  // first moments (adam) / velocity (sgd momentum)
    std::vector<T> v;  // second moments (adam)

    static OptimizerState make(const OptimizerConfig& cfg, std::size_t n_params) {
        OptimizerState s;
        s.cfg = cfg;
        s.m.assign(n_params, T(0));
        if (cfg.kind == OptKind::Adam) s.v.assign(n_params, T(0));
        return s;
    }
};

namespace detail {

template <typename T, typename F>
void for_each_param(NetParams<T>& p, Gradients<T>& g, F&& f) {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < p.weights.size(); ++j)
        for (std::size_t i = 0; i < p.weights[j].data.size(); ++i)
            f(p.weights[j].data[i], g.weights[j].data[i], idx++);
    for (std::size_t j = 0; j < p.shifts.size(); ++j)
        for (std::size_t i = 0; i < p.shifts[j].size(); ++i)
            f(p.shifts[j][i], g.shifts[j][i], idx++);
}

}  // namespace detail

template <typename T>
void sgd_step(NetParams<T>& params, Gradients<T>& grads, OptimizerState<T>& state, double lr) {
    const T mu = static_cast<T>(state.cfg.momentum);
    bool bad = false;
    detail::for_each_param(params, grads, [&](T& w, T& g, std::size_t i) {
        T upd = g;
        if (mu != T(0)) {
            state.m[i] = mu * state.m[i] + g;
            upd = state.m[i];
        }
        w -= static_cast<T>(lr) * upd;
        if (!std::isfinite(static_cast<double>(w))) bad = true;
    });
    ++state.t;
    if (bad) throw NumericError("sgd_step produced a non-finite parameter");
}

template <typename T>
void adam_step(NetParams<T>& params, Gradients<T>& grads, OptimizerState<T>& state, double lr) {
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2, eps = state.cfg.epsilon;
    ++state.t;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    bool bad = false;
    detail::for_each_param(params, grads, [&](T& w, T& g, std::size_t i) {
        const double gd = static_cast<double>(g);
        const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * gd;
        const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * gd * gd;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        w -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
        if (!std::isfinite(static_cast<double>(w))) bad = true;
    });
    if (bad) throw NumericError("adam_step produced a non-finite parameter");
}

template <typename T>
void optimizer_step(NetParams<T>& params, Gradients<T>& grads, OptimizerState<T>& state,
                    double lr) {
    if (state.cfg.kind == OptKind::Sgd)
        sgd_step(params, grads, state, lr);
    else
        adam_step(params, grads, state, lr);
}

enum class ScheduleKind { Constant, CosineCyclic };

struct LrSchedule {
    ScheduleKind kind = ScheduleKind::Constant;
    double base_lr = 0.001;  // alpha_0
    int total_epochs = 1;    // T
    int cycles = 1;          // M (cosine only)

    void validate() const {
        if (base_lr <= 0.0) throw ConfigError("LrSchedule: base_lr must be > 0");
        if (cycles < 1) throw ConfigError("LrSchedule: cycles must be >= 1");
        if (total_epochs < cycles) throw ConfigError("LrSchedule: total_epochs must be >= cycles");
    }
};

// epoch is 1-based. Cosine: (alpha0/2) * (cos(pi * ((epoch-1) mod c) / c) + 1)
// with cycle length c = ceil(T / M).
inline double schedule_lr(const LrSchedule& sched, int epoch) {
    sched.validate();
    if (epoch < 1 || epoch > sched.total_epochs)
        throw ConfigError("schedule_lr: epoch " + std::to_string(epoch) + " out of [1, " +
                          std::to_string(sched.total_epochs) + "]");
    if (sched.kind == ScheduleKind::Constant) return sched.base_lr;
    const int c = (sched.total_epochs + sched.cycles - 1) / sched.cycles;
    const int pos = (epoch - 1) % c;
    return 0.5 * sched.base_lr *
           (std::cos(3.14159265358979323846 * static_cast<double>(pos) / c) + 1.0);
}

// Capture epochs for M snapshots over T epochs: ends of the cosine cycles,
// clamped so the list stays strictly increasing and finishes at T.
inline std::vector<int> snapshot_boundaries(int total_epochs, int cycles) {
    if (cycles < 1 || total_epochs < cycles)
        throw ConfigError("snapshot_boundaries: need T >= M >= 1");
    const int c = (total_epochs + cycles - 1) / cycles;
    std::vector<int> out;
    out.reserve(cycles);
    for (int k = 1; k <= cycles; ++k)
        out.push_back(std::min(k * c, total_epochs - (cycles - k)));
    return out;
}

}  // namespace star
