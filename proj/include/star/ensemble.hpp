#pragma once

#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "star/dataset.hpp"
#include "star/matrix.hpp"
#include "star/net.hpp"
#include "star/optim.hpp"
#include "star/rng.hpp"

namespace star {

// Stable softmax with max-subtraction; entries are strictly positive and
// sum to 1 up to rounding.
template <typename T>
std::vector<double> simplex_weights(const std::vector<T>& logits) {
    if (logits.empty()) throw ShapeError("simplex_weights: empty logits");
    double mx = static_cast<double>(logits[0]);
    for (const T& w : logits) mx = std::max(mx, static_cast<double>(w));
    std::vector<double> lam(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        lam[i] = std::exp(static_cast<double>(logits[i]) - mx);
        denom += lam[i];
    }
    for (double& l : lam) l /= denom;
    return lam;
}

enum class Variant {
    SnapStarShotWarmup,
    SnapStarNewWarmup,
    SnapEnsemble,
    Ensemble,
    ClassicStarNoWarmup,
    ClassicStarNewWarmup,
    BigNn,
};

inline const std::vector<std::pair<Variant, std::string>>& variant_names() {
    static const std::vector<std::pair<Variant, std::string>> names = {
        {Variant::SnapStarShotWarmup, "snap_star_shot_warmup"},
        {Variant::SnapStarNewWarmup, "snap_star_new_warmup"},
        {Variant::SnapEnsemble, "snap_ensemble"},
        {Variant::Ensemble, "ensemble"},
        {Variant::ClassicStarNoWarmup, "classic_star_no_warmup"},
        {Variant::ClassicStarNewWarmup, "classic_star_new_warmup"},
        {Variant::BigNn, "big_nn"},
    };
    return names;
}

inline std::string variant_name(Variant v) {
    for (const auto& [var, name] : variant_names())
        if (var == v) return name;
    throw ConfigError("unknown variant");
}

inline Variant variant_from_name(const std::string& s) {
    for (const auto& [var, name] : variant_names())
        if (name == s) return var;
    throw ConfigError("unknown variant '" + s + "'");
}

// Two published accountings for the snapshot phase: one shared run of
// `epochs` for all shots, or one full `epochs` per cosine cycle.
enum class SnapBudget { SharedRun, PerCycle };

struct BudgetCounter {
    long epochs_consumed = 0;
    long gradient_steps = 0;

    void add(long epochs, long steps) {
        epochs_consumed += epochs;
        gradient_steps += steps;
    }
};

struct TrainPlan {
    Variant variant = Variant::ClassicStarNewWarmup;
    NetworkSpec block;
    int d = 1;
    int epochs = 1;               // per-block budget B
    double warmup_fraction = 0.4;
    OptimizerConfig optimizer;    // block / star / big-nn phases
    std::optional<OptimizerConfig> snap_optimizer;  // snapshot run override
    ScheduleKind schedule = ScheduleKind::Constant;
    std::size_t batch_size = 32;
    std::uint64_t master_seed = 0;
    SnapBudget snap_budget = SnapBudget::SharedRun;
    LossKind loss = LossKind::Squared;
    bool parallel_members = false;

    void validate() const {
        block.validate();
        if (d < 1) throw ConfigError("TrainPlan: d must be >= 1");
        if (epochs < 1) throw ConfigError("TrainPlan: epochs must be >= 1");
        if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
            throw ConfigError("TrainPlan: warmup_fraction must lie in [0,1)");
        if (batch_size < 1) throw ConfigError("TrainPlan: batch_size must be >= 1");
    }
};

inline long budget_of(const TrainPlan& plan) {
    plan.validate();
    const long d = plan.d, B = plan.epochs;
    switch (plan.variant) {
        case Variant::Ensemble:
        case Variant::ClassicStarNoWarmup:
        case Variant::ClassicStarNewWarmup:
            return (d + 1) * B;
        case Variant::BigNn:
            return B;
        case Variant::SnapEnsemble:
            return plan.snap_budget == SnapBudget::SharedRun ? 2 * B : (d + 1) * B;
        case Variant::SnapStarNewWarmup:
            return plan.snap_budget == SnapBudget::SharedRun ? 2 * B : (d + 1) * B;
        case Variant::SnapStarShotWarmup:
            return plan.snap_budget == SnapBudget::SharedRun ? 2 * B : (d + 2) * B;
    }
    throw ConfigError("budget_of: unknown variant");
}

// Training inputs in the working precision.
template <typename T>
struct TrainData {
    Mat<T> X;
    Mat<T> Y;                 // regression targets (n x out)
    std::vector<int> labels;  // classification targets
    LossKind loss = LossKind::Squared;

    std::size_t size() const { return X.rows; }

    static TrainData from_dataset(const Dataset& ds, LossKind loss_kind, int output_dim) {
        TrainData td;
        td.loss = loss_kind;
        td.X.rows = ds.X.rows;
        td.X.cols = ds.X.cols;
        td.X.data.assign(ds.X.data.begin(), ds.X.data.end());
        if (loss_kind == LossKind::Squared) {
            if (output_dim != 1)
                throw ShapeError("TrainData: regression expects output width 1");
            td.Y = Mat<T>(ds.size(), 1);
            for (std::size_t i = 0; i < ds.size(); ++i) td.Y(i, 0) = static_cast<T>(ds.y[i]);
        } else {
            td.labels = ds.labels;
        }
        return td;
    }

    TrainData rows(const std::vector<std::size_t>& idx) const {
        TrainData out;
        out.loss = loss;
        out.X = Mat<T>(idx.size(), X.cols);
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy(X.row(idx[i]), X.row(idx[i]) + X.cols, out.X.row(i));
        if (loss == LossKind::Squared) {
            out.Y = Mat<T>(idx.size(), Y.cols);
            for (std::size_t i = 0; i < idx.size(); ++i)
                std::copy(Y.row(idx[i]), Y.row(idx[i]) + Y.cols, out.Y.row(i));
        } else {
            out.labels.reserve(idx.size());
            for (std::size_t i : idx) out.labels.push_back(labels[i]);
        }
        return out;
    }
};

namespace detail {

// Mini-batch training over epochs [epoch_begin, epoch_end] (1-based,
// inclusive), stepping `params` in place. Returns the mean batch loss of
// the final epoch.
template <typename T>
double train_epochs_inplace(const NetworkSpec& spec, NetParams<T>& params,
                            const TrainData<T>& data, std::size_t batch_size,
                            int epoch_begin, int epoch_end, const LrSchedule& sched,
                            OptimizerState<T>& opt, std::uint64_t batch_seed,
                            Rng& dropout_rng, BudgetCounter& budget) {
    double last_epoch_loss = 0.0;
    for (int epoch = epoch_begin; epoch <= epoch_end; ++epoch) {
        const double lr = schedule_lr(sched, epoch);
        double epoch_loss = 0.0;
        const auto slices = batches(data.size(), batch_size, batch_seed, epoch);
        for (const auto& slice : slices) {
            TrainData<T> batch = data.rows(slice);
            auto bp = backprop(spec, params, batch.X, batch.Y, batch.labels, data.loss,
                               Mode::Train, &dropout_rng, /*update_running=*/true);
            optimizer_step(params, bp.grads, opt, lr);
            epoch_loss += bp.loss;
            budget.add(0, 1);
        }
        epoch_loss /= static_cast<double>(slices.size());
        last_epoch_loss = epoch_loss;
        budget.add(1, 0);
    }
    return last_epoch_loss;
}

}  // namespace detail

// Eval-mode batch outputs (deterministic).
template <typename T>
Mat<T> eval_outputs(const NetworkSpec& spec, const NetParams<T>& params, const Mat<T>& X) {
    NetParams<T>& mut = const_cast<NetParams<T>&>(params);  // eval pass never writes
    return batch_forward(spec, mut, X, Mode::Eval);
}

// Eval-mode empirical risk of a model on the given data.
template <typename T>
double eval_risk(const NetworkSpec& spec, const NetParams<T>& params, const TrainData<T>& data) {
    Mat<T> out = eval_outputs(spec, params, data.X);
    return batch_loss_from_output(out, data.Y, data.labels, data.loss);
}

template <typename T>
struct ErmResult {
    NetParams<T> params;
    BudgetCounter budget;
    double initial_train_risk = 0.0;  // eval-mode risk at initialization
    double final_train_risk = 0.0;    // eval-mode empirical risk after training
    double last_epoch_loss = 0.0;     // mean batch loss of the final epoch
};

// One mini-batch ERM run with a fresh default initialization. Deterministic
// for a fixed seed.
template <typename T>
ErmResult<T> train_erm(const NetworkSpec& spec, const TrainData<T>& data, int epochs,
                       const OptimizerConfig& opt_cfg, ScheduleKind schedule,
                       std::size_t batch_size, std::uint64_t seed) {
    if (epochs < 1) throw ConfigError("train_erm: epochs must be >= 1");
    Rng root(seed);
    Rng init_rng = root.child(0);
    Rng dropout_rng = root.child(1);
    const std::uint64_t batch_seed = root.child(2).next_u64();

    ErmResult<T> res;
    res.params = init_params<T>(spec, init_rng);
    res.initial_train_risk = eval_risk(spec, res.params, data);
    LrSchedule sched{schedule, opt_cfg.lr, epochs, 1};
    auto opt = OptimizerState<T>::make(opt_cfg, spec.total_entries());
    res.last_epoch_loss = detail::train_epochs_inplace(spec, res.params, data, batch_size, 1,
                                                       epochs, sched, opt, batch_seed,
                                                       dropout_rng, res.budget);
    res.final_train_risk = eval_risk(spec, res.params, data);
    return res;
}

template <typename T>
struct SnapshotResult {
    std::vector<NetParams<T>> shots;
    BudgetCounter budget;
};

// One training run of `total_epochs` under cyclical cosine annealing with
// `n_shots` cycles; a parameter copy is captured at the end of each cycle.
// The budget is the single run, not n_shots runs.
template <typename T>
SnapshotResult<T> snapshot_train(const NetworkSpec& spec, const TrainData<T>& data,
                                 int total_epochs, int n_shots,
                                 const OptimizerConfig& opt_cfg, std::size_t batch_size,
                                 std::uint64_t seed) {
    if (n_shots < 1) throw ConfigError("snapshot_train: need at least one shot");
    Rng root(seed);
    Rng init_rng = root.child(0);
    Rng dropout_rng = root.child(1);
    const std::uint64_t batch_seed = root.child(2).next_u64();

    SnapshotResult<T> res;
    NetParams<T> params = init_params<T>(spec, init_rng);
    LrSchedule sched{ScheduleKind::CosineCyclic, opt_cfg.lr, total_epochs, n_shots};
    auto opt = OptimizerState<T>::make(opt_cfg, spec.total_entries());
    const std::vector<int> bounds = snapshot_boundaries(total_epochs, n_shots);

    int epoch_at = 1;
    for (int boundary : bounds) {
        detail::train_epochs_inplace(spec, params, data, batch_size, epoch_at, boundary, sched,
                                     opt, batch_seed, dropout_rng, res.budget);
        res.shots.push_back(params);
        epoch_at = boundary + 1;
    }
    return res;
}

// The Star_d estimator: d frozen members plus one trainable block, joined
// by a softmax-parametrized convex layer. The last member is the trainable
// one.
template <typename T>
struct ConvexAggregate {
    NetworkSpec member_spec;
    std::vector<NetParams<T>> members;  // size d+1
    std::vector<T> logits;              // size d+1

    std::vector<double> lambda() const { return simplex_weights(logits); }
};

template <typename T>
struct StarFit {
    ConvexAggregate<T> aggregate;
    BudgetCounter budget;
    double final_train_risk = 0.0;
    double max_simplex_residual = 0.0;  // max |sum(lambda) - 1| seen across steps
};

enum class BlockInit { Fresh, FromParams };

namespace detail {

// Frozen members never re-run during the star phase: their eval outputs on
// the training inputs are cached once.
template <typename T>
std::vector<Mat<T>> cache_member_outputs(const NetworkSpec& spec,
                                         const std::vector<NetParams<T>>& members,
                                         const Mat<T>& X) {
    std::vector<Mat<T>> outs;
    outs.reserve(members.size());
    for (const auto& m : members) outs.push_back(eval_outputs(spec, m, X));
    return outs;
}

template <typename T>
double loss_grad_from_output(const Mat<T>& yhat, const Mat<T>& targets,
                             const std::vector<int>& labels, LossKind loss, Mat<T>& dY) {
    const double value = batch_loss_from_output(yhat, targets, labels, loss);
    dY = Mat<T>(yhat.rows, yhat.cols);
    const std::size_t B = yhat.rows;
    if (loss == LossKind::Squared) {
        const T inv = static_cast<T>(1.0 / static_cast<double>(B));
        for (std::size_t i = 0; i < yhat.data.size(); ++i)
            dY.data[i] = T(2) * (yhat.data[i] - targets.data[i]) * inv;
    } else {
        for (std::size_t b = 0; b < B; ++b) {
            const T* o = yhat.row(b);
            T* d = dY.row(b);
            double mx = static_cast<double>(o[0]);
            for (std::size_t k = 1; k < yhat.cols; ++k)
                mx = std::max(mx, static_cast<double>(o[k]));
            double denom = 0.0;
            for (std::size_t k = 0; k < yhat.cols; ++k)
                denom += std::exp(static_cast<double>(o[k]) - mx);
            for (std::size_t k = 0; k < yhat.cols; ++k) {
                const double p = std::exp(static_cast<double>(o[k]) - mx) / denom;
                d[k] = static_cast<T>((p - (static_cast<int>(k) == labels[b] ? 1.0 : 0.0)) /
                                      static_cast<double>(B));
            }
        }
    }
    return value;
}

// Adam/SGD over a small flat vector (the convex-layer logits).
template <typename T>
struct VecOptimizer {
    OptimizerConfig cfg;
    std::int64_t t = 0;
    std::vector<double> m, v;

    explicit VecOptimizer(const OptimizerConfig& c, std::size_t n) : cfg(c), m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<T>& w, const std::vector<double>& g, double lr) {
        ++t;
        if (cfg.kind == OptKind::Sgd) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                double upd = g[i];
                if (cfg.momentum != 0.0) {
                    m[i] = cfg.momentum * m[i] + g[i];
                    upd = m[i];
                }
                w[i] -= static_cast<T>(lr * upd);
            }
        } else {
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                w[i] -= static_cast<T>(lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon));
            }
        }
    }
};

}  // namespace detail

// Second step of the Star_d procedure. Phase 1 trains the new block alone on
// the task loss for floor(warmup_fraction * epochs) epochs; phase 2 trains
// block and convex-layer logits jointly for the remainder. Frozen member
// parameters are copied in and never written.
template <typename T>
StarFit<T> star_d_train(const std::vector<NetParams<T>>& frozen_members,
                        const NetworkSpec& spec, const TrainData<T>& data, int epochs,
                        double warmup_fraction, BlockInit init_mode,
                        const NetParams<T>* init_source, const OptimizerConfig& opt_cfg,
                        ScheduleKind schedule, std::size_t batch_size, std::uint64_t seed) {
    if (frozen_members.empty()) throw ConfigError("star_d_train: need at least one frozen member");
    if (epochs < 1) throw ConfigError("star_d_train: epochs must be >= 1");
    if (init_mode == BlockInit::FromParams && init_source == nullptr)
        throw ConfigError("star_d_train: FromParams init requires source params");

    Rng root(seed);
    Rng init_rng = root.child(0);
    Rng dropout_rng = root.child(1);
    const std::uint64_t batch_seed = root.child(2).next_u64();

    const std::size_t d = frozen_members.size();
    StarFit<T> fit;
    fit.aggregate.member_spec = spec;
    fit.aggregate.members = frozen_members;
    fit.aggregate.members.push_back(init_mode == BlockInit::Fresh
                                        ? init_params<T>(spec, init_rng)
                                        : *init_source);
    fit.aggregate.logits.assign(d + 1, T(0));  // uniform lambda at start

    NetParams<T>& block = fit.aggregate.members.back();
    LrSchedule sched{schedule, opt_cfg.lr, epochs, 1};
    auto block_opt = OptimizerState<T>::make(opt_cfg, spec.total_entries());
    detail::VecOptimizer<T> logit_opt(opt_cfg, d + 1);

    const int warmup_epochs = static_cast<int>(warmup_fraction * epochs);

    // Phase 1: the new block alone, on the task loss.
    if (warmup_epochs > 0)
        detail::train_epochs_inplace(spec, block, data, batch_size, 1, warmup_epochs, sched,
                                     block_opt, batch_seed, dropout_rng, fit.budget);

    // Phase 2: block + logits jointly through the convex layer.
    const auto frozen_out = detail::cache_member_outputs(spec, frozen_members, data.X);
    const std::size_t out_dim = static_cast<std::size_t>(spec.output_dim());

    for (int epoch = warmup_epochs + 1; epoch <= epochs; ++epoch) {
        const double lr = schedule_lr(sched, epoch);
        const auto slices = batches(data.size(), batch_size, batch_seed, epoch);
        for (const auto& slice : slices) {
            TrainData<T> batch = data.rows(slice);
            const std::size_t B = slice.size();

            ForwardCache<T> cache;
            Mat<T> block_out = batch_forward(spec, block, batch.X, Mode::Train, &dropout_rng,
                                             &cache, /*update_running=*/true);

            const std::vector<double> lam = simplex_weights(fit.aggregate.logits);
            Mat<T> yhat(B, out_dim);
            for (std::size_t b = 0; b < B; ++b) {
                T* yr = yhat.row(b);
                for (std::size_t c = 0; c < out_dim; ++c) {
                    double acc = lam[d] * static_cast<double>(block_out(b, c));
                    for (std::size_t k = 0; k < d; ++k)
                        acc += lam[k] * static_cast<double>(frozen_out[k](slice[b], c));
                    yr[c] = static_cast<T>(acc);
                }
            }

            Mat<T> dY;
            detail::loss_grad_from_output(yhat, batch.Y, batch.labels, data.loss, dY);

            // d loss / d lambda_k = sum_{b,c} dY * o_k
            std::vector<double> dlam(d + 1, 0.0);
            for (std::size_t b = 0; b < B; ++b) {
                const T* dy = dY.row(b);
                for (std::size_t c = 0; c < out_dim; ++c) {
                    const double g = static_cast<double>(dy[c]);
                    for (std::size_t k = 0; k < d; ++k)
                        dlam[k] += g * static_cast<double>(frozen_out[k](slice[b], c));
                    dlam[d] += g * static_cast<double>(block_out(b, c));
                }
            }
            // softmax jacobian: dw_j = lambda_j (dlam_j - sum_k lambda_k dlam_k)
            double mixed = 0.0;
            for (std::size_t k = 0; k <= d; ++k) mixed += lam[k] * dlam[k];
            std::vector<double> dlogits(d + 1);
            for (std::size_t k = 0; k <= d; ++k) dlogits[k] = lam[k] * (dlam[k] - mixed);

            // block gradient through its convex weight
            Mat<T> dBlock = dY;
            for (T& x : dBlock.data) x = static_cast<T>(static_cast<double>(x) * lam[d]);
            Gradients<T> grads = zero_gradients<T>(spec);
            backward_pass(spec, block, cache, dBlock, grads);

            optimizer_step(block, grads, block_opt, lr);
            logit_opt.step(fit.aggregate.logits, dlogits, lr);

            const std::vector<double> lam_after = simplex_weights(fit.aggregate.logits);
            double sum = 0.0;
            for (double l : lam_after) sum += l;
            fit.max_simplex_residual = std::max(fit.max_simplex_residual, std::abs(sum - 1.0));
            fit.budget.add(0, 1);
        }
        fit.budget.add(1, 0);
    }

    // Eval-mode train risk of the aggregate.
    {
        const auto all_out = detail::cache_member_outputs(spec, fit.aggregate.members, data.X);
        const std::vector<double> lam = simplex_weights(fit.aggregate.logits);
        Mat<T> yhat(data.size(), out_dim);
        for (std::size_t b = 0; b < data.size(); ++b)
            for (std::size_t c = 0; c < out_dim; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k <= d; ++k)
                    acc += lam[k] * static_cast<double>(all_out[k](b, c));
                yhat(b, c) = static_cast<T>(acc);
            }
        fit.final_train_risk = batch_loss_from_output(yhat, data.Y, data.labels, data.loss);
    }
    return fit;
}

// sum_k lambda_k * member_k(x) at the current logits.
template <typename T>
std::vector<double> aggregate_forward(const ConvexAggregate<T>& agg, const std::vector<T>& x) {
    if (agg.members.empty()) throw ShapeError("aggregate_forward: no members");
    const std::vector<double> lam = simplex_weights(agg.logits);
    std::vector<double> acc(agg.member_spec.output_dim(), 0.0);
    for (std::size_t k = 0; k < agg.members.size(); ++k) {
        NetParams<T>& m = const_cast<NetParams<T>&>(agg.members[k]);
        const std::vector<T> out = mlp_forward(agg.member_spec, m, x, Mode::Eval);
        if (out.size() != acc.size()) throw ShapeError("aggregate_forward: member width mismatch");
        for (std::size_t c = 0; c < acc.size(); ++c)
            acc[c] += lam[k] * static_cast<double>(out[c]);
    }
    return acc;
}

template <typename T>
struct BigNnFit {
    std::vector<NetParams<T>> blocks;   // d+1
    std::vector<T> combine;             // unconstrained linear weights, one per block
    BudgetCounter budget;
    double final_train_risk = 0.0;
};

// All d+1 blocks plus the connecting linear layer trained simultaneously.
template <typename T>
BigNnFit<T> big_nn_train(const NetworkSpec& spec, const TrainData<T>& data, int d, int epochs,
                         const OptimizerConfig& opt_cfg, ScheduleKind schedule,
                         std::size_t batch_size, std::uint64_t seed) {
    if (d < 1 || epochs < 1) throw ConfigError("big_nn_train: need d >= 1 and epochs >= 1");
    Rng root(seed);
    Rng dropout_rng = root.child(1);
    const std::uint64_t batch_seed = root.child(2).next_u64();

    BigNnFit<T> fit;
    const std::size_t n_blocks = static_cast<std::size_t>(d) + 1;
    for (std::size_t k = 0; k < n_blocks; ++k) {
        Rng block_rng = root.child(10 + k);
        fit.blocks.push_back(init_params<T>(spec, block_rng));
    }
    // default linear init over fan_in = d+1
    {
        Rng comb_rng = root.child(5);
        const double bound = 1.0 / std::sqrt(static_cast<double>(n_blocks));
        fit.combine.resize(n_blocks);
        for (T& c : fit.combine) c = static_cast<T>(comb_rng.uniform(-bound, bound));
    }

    LrSchedule sched{schedule, opt_cfg.lr, epochs, 1};
    std::vector<OptimizerState<T>> block_opts;
    for (std::size_t k = 0; k < n_blocks; ++k)
        block_opts.push_back(OptimizerState<T>::make(opt_cfg, spec.total_entries()));
    detail::VecOptimizer<T> comb_opt(opt_cfg, n_blocks);

    const std::size_t out_dim = static_cast<std::size_t>(spec.output_dim());

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const double lr = schedule_lr(sched, epoch);
        const auto slices = batches(data.size(), batch_size, batch_seed, epoch);
        for (const auto& slice : slices) {
            TrainData<T> batch = data.rows(slice);
            const std::size_t B = slice.size();

            std::vector<ForwardCache<T>> caches(n_blocks);
            std::vector<Mat<T>> outs(n_blocks);
            for (std::size_t k = 0; k < n_blocks; ++k)
                outs[k] = batch_forward(spec, fit.blocks[k], batch.X, Mode::Train, &dropout_rng,
                                        &caches[k], /*update_running=*/true);

            Mat<T> yhat(B, out_dim, T(0));
            for (std::size_t k = 0; k < n_blocks; ++k) {
                const double c = static_cast<double>(fit.combine[k]);
                for (std::size_t i = 0; i < yhat.data.size(); ++i)
                    yhat.data[i] += static_cast<T>(c * static_cast<double>(outs[k].data[i]));
            }

            Mat<T> dY;
            detail::loss_grad_from_output(yhat, batch.Y, batch.labels, data.loss, dY);

            std::vector<double> dcomb(n_blocks, 0.0);
            for (std::size_t k = 0; k < n_blocks; ++k) {
                for (std::size_t i = 0; i < dY.data.size(); ++i)
                    dcomb[k] += static_cast<double>(dY.data[i]) *
                                static_cast<double>(outs[k].data[i]);
                Mat<T> dBlock = dY;
                const double c = static_cast<double>(fit.combine[k]);
                for (T& x : dBlock.data) x = static_cast<T>(static_cast<double>(x) * c);
                Gradients<T> grads = zero_gradients<T>(spec);
                backward_pass(spec, fit.blocks[k], caches[k], dBlock, grads);
                optimizer_step(fit.blocks[k], grads, block_opts[k], lr);
            }
            comb_opt.step(fit.combine, dcomb, lr);
            fit.budget.add(0, 1);
        }
        fit.budget.add(1, 0);
    }

    {
        Mat<T> yhat(data.size(), out_dim, T(0));
        for (std::size_t k = 0; k < n_blocks; ++k) {
            Mat<T> o = eval_outputs(spec, fit.blocks[k], data.X);
            const double c = static_cast<double>(fit.combine[k]);
            for (std::size_t i = 0; i < yhat.data.size(); ++i)
                yhat.data[i] += static_cast<T>(c * static_cast<double>(o.data[i]));
        }
        fit.final_train_risk = batch_loss_from_output(yhat, data.Y, data.labels, data.loss);
    }
    return fit;
}

// How a trained predictor combines its members.
enum class CombineRule { Average, Convex, Linear };

template <typename T>
struct TrainedPredictor {
    Variant variant = Variant::Ensemble;
    NetworkSpec spec;
    std::vector<NetParams<T>> members;
    std::vector<T> logits;       // Convex rule
    std::vector<T> linear;       // Linear rule
    CombineRule rule = CombineRule::Average;
    LossKind loss = LossKind::Squared;

    std::vector<double> combine_weights() const {
        if (rule == CombineRule::Convex) return simplex_weights(logits);
        std::vector<double> w;
        if (rule == CombineRule::Linear)
            for (const T& c : linear) w.push_back(static_cast<double>(c));
        else
            w.assign(members.size(), 1.0 / static_cast<double>(members.size()));
        return w;
    }
};

// Deterministic eval-mode predictions, n x output_dim. For classification
// the Average rule averages member softmax probabilities ("predictions are
// averaged"); Convex/Linear rules combine raw outputs.
template <typename T>
MatD predict(const TrainedPredictor<T>& pred, const MatD& X) {
    if (pred.members.empty()) throw ShapeError("predict: no members");
    Mat<T> Xt(X.rows, X.cols);
    for (std::size_t i = 0; i < X.data.size(); ++i) Xt.data[i] = static_cast<T>(X.data[i]);

    const std::size_t out_dim = static_cast<std::size_t>(pred.spec.output_dim());
    MatD yhat(X.rows, out_dim, 0.0);
    const std::vector<double> w = pred.combine_weights();

    const bool average_probs =
        pred.rule == CombineRule::Average && pred.loss == LossKind::CrossEntropy;

    for (std::size_t k = 0; k < pred.members.size(); ++k) {
        Mat<T> o = eval_outputs(pred.spec, pred.members[k], Xt);
        for (std::size_t b = 0; b < X.rows; ++b) {
            const T* orow = o.row(b);
            double* yrow = yhat.row(b);
            if (average_probs) {
                double mx = static_cast<double>(orow[0]);
                for (std::size_t c = 1; c < out_dim; ++c)
                    mx = std::max(mx, static_cast<double>(orow[c]));
                double denom = 0.0;
                for (std::size_t c = 0; c < out_dim; ++c)
                    denom += std::exp(static_cast<double>(orow[c]) - mx);
                for (std::size_t c = 0; c < out_dim; ++c)
                    yrow[c] += w[k] * std::exp(static_cast<double>(orow[c]) - mx) / denom;
            } else {
                for (std::size_t c = 0; c < out_dim; ++c)
                    yrow[c] += w[k] * static_cast<double>(orow[c]);
            }
        }
    }
    return yhat;
}

// Class probabilities for a classification predictor. Average rule already
// holds probabilities; the others hold combined logits.
template <typename T>
MatD predict_probs(const TrainedPredictor<T>& pred, const MatD& X) {
    MatD raw = predict(pred, X);
    if (pred.loss != LossKind::CrossEntropy) throw ConfigError("predict_probs: not a classifier");
    if (pred.rule == CombineRule::Average) return raw;
    for (std::size_t b = 0; b < raw.rows; ++b) {
        double* r = raw.row(b);
        double mx = r[0];
        for (std::size_t c = 1; c < raw.cols; ++c) mx = std::max(mx, r[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < raw.cols; ++c) denom += std::exp(r[c] - mx);
        for (std::size_t c = 0; c < raw.cols; ++c) r[c] = std::exp(r[c] - mx) / denom;
    }
    return raw;
}

// Eval-mode empirical risk of a trained predictor on training inputs.
template <typename T>
double predictor_risk(const TrainedPredictor<T>& pred, const TrainData<T>& data) {
    MatD Xd(data.X.rows, data.X.cols);
    for (std::size_t i = 0; i < data.X.data.size(); ++i)
        Xd.data[i] = static_cast<double>(data.X.data[i]);
    MatD yhat = predict(pred, Xd);
    if (pred.loss == LossKind::CrossEntropy && pred.rule == CombineRule::Average) {
        // averaged probabilities: score the mean cross-entropy directly
        double total = 0.0;
        for (std::size_t b = 0; b < yhat.rows; ++b) {
            const double p = std::max(yhat(b, data.labels[b]), 1e-300);
            total += -std::log(p);
        }
        return total / static_cast<double>(yhat.rows);
    }
    Mat<T> yh(yhat.rows, yhat.cols);
    for (std::size_t i = 0; i < yhat.data.size(); ++i)
        yh.data[i] = static_cast<T>(yhat.data[i]);
    return batch_loss_from_output(yh, data.Y, data.labels, data.loss);
}

template <typename T>
struct VariantRun {
    TrainedPredictor<T> predictor;
    BudgetCounter budget;
    double final_train_risk = 0.0;
    double max_simplex_residual = 0.0;
};

// Dispatches a TrainPlan to the matching composition of trainers.
template <typename T>
VariantRun<T> run_variant(const TrainPlan& plan, const TrainData<T>& data) {
    plan.validate();
    const Rng master(plan.master_seed);
    const int d = plan.d;
    VariantRun<T> run;
    run.predictor.variant = plan.variant;
    run.predictor.spec = plan.block;
    run.predictor.loss = plan.loss;

    const OptimizerConfig snap_cfg = plan.snap_optimizer.value_or(plan.optimizer);

    auto train_members = [&](int count, int epochs) {
        std::vector<ErmResult<T>> results(count);
        auto work = [&](int k) {
            results[k] = train_erm(plan.block, data, epochs, plan.optimizer, plan.schedule,
                                   plan.batch_size, master.child(k).next_u64());
        };
        if (plan.parallel_members) {
            std::vector<std::future<void>> futs;
            for (int k = 0; k < count; ++k)
                futs.push_back(std::async(std::launch::async, work, k));
            for (auto& f : futs) f.get();
        } else {
            for (int k = 0; k < count; ++k) work(k);
        }
        return results;
    };

    switch (plan.variant) {
        case Variant::Ensemble: {
            auto members = train_members(d + 1, plan.epochs);
            for (auto& m : members) {
                run.predictor.members.push_back(std::move(m.params));
                run.budget.add(m.budget.epochs_consumed, m.budget.gradient_steps);
            }
            run.predictor.rule = CombineRule::Average;
            run.final_train_risk = predictor_risk(run.predictor, data);  // averaged predictor
            break;
        }
        case Variant::SnapEnsemble: {
            const int total = plan.snap_budget == SnapBudget::SharedRun ? 2 * plan.epochs
                                                                        : (d + 1) * plan.epochs;
            auto snap = snapshot_train(plan.block, data, total, d + 1, snap_cfg,
                                       plan.batch_size, master.child(0).next_u64());
            run.predictor.members = std::move(snap.shots);
            run.predictor.rule = CombineRule::Average;
            run.budget = snap.budget;
            run.final_train_risk = predictor_risk(run.predictor, data);
            break;
        }
        case Variant::ClassicStarNoWarmup:
        case Variant::ClassicStarNewWarmup: {
            auto members = train_members(d, plan.epochs);
            std::vector<NetParams<T>> frozen;
            for (auto& m : members) {
                frozen.push_back(std::move(m.params));
                run.budget.add(m.budget.epochs_consumed, m.budget.gradient_steps);
            }
            const double warm = plan.variant == Variant::ClassicStarNoWarmup
                                    ? 0.0
                                    : plan.warmup_fraction;
            auto fit = star_d_train(frozen, plan.block, data, plan.epochs, warm,
                                    BlockInit::Fresh, static_cast<const NetParams<T>*>(nullptr),
                                    plan.optimizer, plan.schedule, plan.batch_size,
                                    master.child(d).next_u64());
            run.budget.add(fit.budget.epochs_consumed, fit.budget.gradient_steps);
            run.predictor.members = std::move(fit.aggregate.members);
            run.predictor.logits = std::move(fit.aggregate.logits);
            run.predictor.rule = CombineRule::Convex;
            run.final_train_risk = fit.final_train_risk;
            run.max_simplex_residual = fit.max_simplex_residual;
            break;
        }
        case Variant::SnapStarShotWarmup:
        case Variant::SnapStarNewWarmup: {
            const bool shot = plan.variant == Variant::SnapStarShotWarmup;
            int n_shots = d, total = plan.epochs;
            if (plan.snap_budget == SnapBudget::PerCycle) {
                n_shots = shot ? d + 1 : d;
                total = n_shots * plan.epochs;
            } else if (shot) {
                n_shots = d;  // block starts from the last of the d shots
            }
            auto snap = snapshot_train(plan.block, data, total, n_shots, snap_cfg,
                                       plan.batch_size, master.child(0).next_u64());
            run.budget = snap.budget;

            std::vector<NetParams<T>> frozen(snap.shots.begin(), snap.shots.begin() + d);
            const NetParams<T>* init_src = nullptr;
            NetParams<T> init_copy;
            if (shot) {
                init_copy = snap.shots.back();  // d-th shot, or the (d+1)-th under PerCycle
                init_src = &init_copy;
            }
            const double warm = shot ? 0.0 : plan.warmup_fraction;
            auto fit = star_d_train(frozen, plan.block, data, plan.epochs, warm,
                                    shot ? BlockInit::FromParams : BlockInit::Fresh, init_src,
                                    plan.optimizer, plan.schedule, plan.batch_size,
                                    master.child(d).next_u64());
            run.budget.add(fit.budget.epochs_consumed, fit.budget.gradient_steps);
            run.predictor.members = std::move(fit.aggregate.members);
            run.predictor.logits = std::move(fit.aggregate.logits);
            run.predictor.rule = CombineRule::Convex;
            run.final_train_risk = fit.final_train_risk;
            run.max_simplex_residual = fit.max_simplex_residual;
            break;
        }
        case Variant::BigNn: {
            auto fit = big_nn_train(plan.block, data, d, plan.epochs, plan.optimizer,
                                    plan.schedule, plan.batch_size, master.child(0).next_u64());
            run.budget = fit.budget;
            run.predictor.members = std::move(fit.blocks);
            run.predictor.linear = std::move(fit.combine);
            run.predictor.rule = CombineRule::Linear;
            run.final_train_risk = fit.final_train_risk;
            break;
        }
    }
    return run;
}

}  // namespace star
