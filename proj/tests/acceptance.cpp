// Acceptance suite: one check per numbered criterion, each printing a
// single [PASS]/[FAIL] line. Run `acceptance` for all, `acceptance N` for
// one. Exit status is non-zero when any executed criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "star/ensemble.hpp"
#include "star/experiment.hpp"
#include "star/metrics.hpp"
#include "star/theory.hpp"
#include "star/theory_suite.hpp"

using namespace star;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, double seconds) {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what
              << "  (" << std::fixed << std::setprecision(1) << seconds << "s)\n";
    std::cout.unsetf(std::ios::fixed);
    if (!pass) ++g_failures;
}

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

const theory::CheckResult* find_check(const theory::SuiteReport& report, const std::string& name) {
    for (const auto& c : report.checks)
        if (c.name == name) return &c;
    return nullptr;
}

// --- criterion 1: geometric inequality fuzz ----------------------------

void criterion_1() {
    Timer timer;
    const auto suite = theory::run_theory_suite("geometric", 1000, 20250101);
    const auto* c36 = find_check(suite, "geometric_delta_c36");
    const auto* c18 = find_check(suite, "geometric_exact_c18");
    const bool pass = c36 && c36->instances == 1000 && c36->violations == 0 &&
                      c36->min_margin >= -1e-9;
    std::ostringstream what;
    what << "geometric inequality (c=1/36), 1000 instances, min margin "
         << (c36 ? c36->min_margin : -1.0) << ", violations " << (c36 ? c36->violations : 999)
         << "; exact variant (c=1/18) violations " << (c18 ? c18->violations : 999);
    report(1, pass, what.str(), timer.seconds());
}

// --- criterion 2: lemma 9 enumeration -----------------------------------

void criterion_2() {
    Timer timer;
    const auto suite = theory::run_theory_suite("offset", 200, 20250202);
    const auto* expectation = find_check(suite, "lemma9_expectation");
    const auto* deviation = find_check(suite, "lemma9_deviation_rate");
    const bool pass = expectation && expectation->instances == 200 &&
                      expectation->violations == 0 && deviation &&
                      deviation->instances == 2000 && deviation->violations == 0;
    std::ostringstream what;
    what << "lemma 9: expectation bound exact on 200 sets (min gap "
         << (expectation ? expectation->min_margin : -1.0) << "), deviation rate margin "
         << (deviation ? deviation->min_margin : -1.0) << " over 2000 draws";
    report(2, pass, what.str(), timer.seconds());
}

// --- criterion 3: gradient correctness ----------------------------------

double loss_at(const NetworkSpec& spec, NetParamsD& params, const MatD& X, const MatD& Y) {
    MatD out = batch_forward(spec, params, X, Mode::Eval);
    return batch_loss_from_output(out, Y, {}, LossKind::Squared);
}

void criterion_3() {
    Timer timer;
    Rng rng(314159);
    int accepted = 0;
    int attempt = 0;
    double worst = 0.0;
    const double h = 1e-5;

    while (accepted < 50 && attempt < 5000) {
        Rng net_rng = rng.child(attempt++);
        NetworkSpec spec;
        spec.depth = 1 + static_cast<int>(net_rng.below(3));
        spec.widths.push_back(1 + static_cast<int>(net_rng.below(4)));
        for (int j = 0; j < spec.depth; ++j)
            spec.widths.push_back(2 + static_cast<int>(net_rng.below(5)));
        spec.widths.push_back(1);
        spec.use_batch_norm = net_rng.bernoulli(0.5);
        spec.dropout_prob = net_rng.bernoulli(0.5) ? 0.3 : 0.0;  // eval mode ignores it

        NetParamsD p = init_params<double>(spec, net_rng);
        if (spec.use_batch_norm)
            for (auto& v : p.bn_var)
                for (double& x : v) x = 0.5 + net_rng.uniform();

        const std::size_t B = 1 + net_rng.below(6);
        MatD X(B, spec.input_dim()), Y(B, 1);
        for (double& v : X.data) v = net_rng.uniform(-1.5, 1.5);
        for (double& v : Y.data) v = net_rng.uniform(-1.0, 1.0);

        // skip instances whose units sit on a ReLU kink: FD is invalid there
        ForwardCache<double> cache;
        batch_forward(spec, p, X, Mode::Eval, nullptr, &cache);
        bool near_kink = false;
        for (int j = 0; j < spec.depth && !near_kink; ++j)
            for (std::size_t b = 0; b < B && !near_kink; ++b)
                for (int k = 0; k < spec.widths[j + 1]; ++k)
                    if (std::abs(cache.pre[j](b, k) - p.shifts[j][k]) < 1e-4) near_kink = true;
        if (near_kink) continue;

        auto bp = backprop(spec, p, X, Y, {}, LossKind::Squared, Mode::Eval);
        auto check_one = [&](double& slot, double analytic) {
            const double keep = slot;
            slot = keep + h;
            const double up = loss_at(spec, p, X, Y);
            slot = keep - h;
            const double down = loss_at(spec, p, X, Y);
            slot = keep;
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst,
                             std::abs(analytic - fd) / (std::abs(analytic) + std::abs(fd) + 1e-8));
        };
        for (int j = 0; j <= spec.depth; ++j)
            for (std::size_t i = 0; i < p.weights[j].data.size(); ++i)
                check_one(p.weights[j].data[i], bp.grads.weights[j].data[i]);
        for (int j = 0; j < spec.depth; ++j)
            for (std::size_t i = 0; i < p.shifts[j].size(); ++i)
                check_one(p.shifts[j][i], bp.grads.shifts[j][i]);
        ++accepted;
    }

    const bool pass = accepted == 50 && worst <= 1e-5;
    std::ostringstream what;
    what << "backprop vs central finite differences on " << accepted
         << " random nets, max relative error " << worst;
    report(3, pass, what.str(), timer.seconds());
}

// --- criterion 4: covering sanity ----------------------------------------

void criterion_4() {
    Timer timer;
    const auto suite = theory::run_theory_suite("cover", 1, 20250404);
    bool pass = true;
    std::size_t violations = 0;
    for (const auto& c : suite.checks) violations += c.violations;
    pass = violations == 0;
    const auto* greedy = find_check(suite, "greedy_net_within_class_bound");
    std::ostringstream what;
    what << "greedy nets within the class covering bound (min log-slack "
         << (greedy ? greedy->min_margin : -1.0) << "), monotonicity and algebraic checks; "
         << violations << " violations";
    report(4, pass, what.str(), timer.seconds());
}

// --- criterion 5: synthetic excess-risk behavior --------------------------

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void criterion_5() {
    Timer timer;

    SyntheticSpec synth;
    synth.teacher_spec.depth = 1;
    synth.teacher_spec.widths = {4, 16, 1};
    Rng teacher_rng(777);
    synth.teacher_params = init_params<double>(synth.teacher_spec, teacher_rng);
    synth.noise_std = 0.1;

    NetworkSpec block;
    block.depth = 1;
    block.widths = {4, 12, 1};

    auto run_at = [&](std::size_t n, std::uint64_t seed, double& star_excess,
                      double& best_member_excess) {
        const SyntheticDataset ds = synthetic_regression(synth, n, seed);
        const auto data = TrainData<double>::from_dataset(ds.data, LossKind::Squared, 1);

        TrainPlan plan;
        plan.variant = Variant::ClassicStarNewWarmup;
        plan.block = block;
        plan.d = 3;
        plan.epochs = 40;
        plan.warmup_fraction = 0.4;
        plan.optimizer.lr = 0.01;
        plan.batch_size = 32;
        plan.master_seed = seed;
        const auto run = run_variant(plan, data);

        auto predict_fn = [&](const MatD& X) {
            MatD out = predict(run.predictor, X);
            return std::vector<double>(out.data.begin(), out.data.end());
        };
        star_excess = theory::excess_risk_synthetic(predict_fn, synth, 50000, 424242);

        best_member_excess = 1e300;
        for (int k = 0; k < plan.d; ++k) {  // the d frozen first-stage models
            const NetParamsD& member = run.predictor.members[k];
            auto member_fn = [&](const MatD& X) {
                NetParamsD m = member;
                MatD out = batch_forward(block, m, X, Mode::Eval);
                return std::vector<double>(out.data.begin(), out.data.end());
            };
            best_member_excess = std::min(
                best_member_excess, theory::excess_risk_synthetic(member_fn, synth, 50000, 424242));
        }
    };

    std::vector<double> small_excess, large_excess, best_members_large;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        double star = 0.0, best = 0.0;
        run_at(256, 9000 + seed, star, best);
        small_excess.push_back(star);
        run_at(4096, 9100 + seed, star, best);
        large_excess.push_back(star);
        best_members_large.push_back(best);
    }

    const double med_small = median(small_excess);
    const double med_large = median(large_excess);
    const double med_best = median(best_members_large);
    const bool pass = med_large < med_small && med_large <= med_best;
    std::ostringstream what;
    what << "classic star (new warm-up), d=3: median excess " << med_large << " at n=4096 vs "
         << med_small << " at n=256; best single member " << med_best;
    report(5, pass, what.str(), timer.seconds());
}

// --- criterion 6: desk-scale directional reproduction ---------------------

void criterion_6() {
    Timer timer;

    RunConfig cfg;
    cfg.data_path = std::string(STAR_DATA_DIR) + "/housing.csv";
    cfg.target = "price";
    cfg.split_ratio = 0.7;
    cfg.split_mode = SplitMode::Shuffled;
    cfg.split_seed = 7;
    cfg.scale_features = true;
    cfg.scale_targets = true;  // class-F nets have no output bias; see README
    cfg.hidden = {128, 64, 32};
    cfg.dropout = 0.1;
    cfg.batch_norm = true;
    cfg.optimizer.kind = OptKind::Adam;
    cfg.optimizer.lr = 0.01;
    cfg.epochs = 200;
    cfg.d = 5;
    cfg.warmup_fraction = 0.4;
    cfg.batch_size = 32;
    cfg.variants = {Variant::ClassicStarNewWarmup, Variant::BigNn};
    cfg.measure_time = false;
    cfg.threads = 2;

    const Dataset ds = load_csv(cfg.data_path, cfg.target, true, Task::Regression);

    int groups_ordered = 0;
    std::ostringstream detail;
    for (int group = 0; group < 5; ++group) {
        cfg.seeds.clear();
        for (int s = 1; s <= 5; ++s)
            cfg.seeds.push_back(static_cast<std::uint64_t>(group) * 100 + s);
        const ExperimentReport rep = run_experiment(cfg, ds);
        double star_mse = -1.0, bignn_mse = -1.0;
        for (const auto& row : rep.rows) {
            if (!row.error.empty()) continue;
            if (row.name == "classic_star_new_warmup") star_mse = row.primary_mean;
            if (row.name == "big_nn") bignn_mse = row.primary_mean;
        }
        const bool ordered = star_mse > 0.0 && bignn_mse > 0.0 && star_mse < bignn_mse;
        if (ordered) ++groups_ordered;
        detail << " g" << group << ": " << star_mse << " vs " << bignn_mse
               << (ordered ? " <" : " !<");
    }

    const bool pass = groups_ordered >= 4;
    std::ostringstream what;
    what << "housing fixture (200 epochs, p=0.1, lr=0.01, d=5): classic star (new warm-up) "
            "beat big NN in "
         << groups_ordered << "/5 seed groups;" << detail.str();
    report(6, pass, what.str(), timer.seconds());
}

// --- criterion 7: budget / freeze / simplex / determinism -----------------

bool params_identical(const NetParamsD& a, const NetParamsD& b) {
    for (std::size_t j = 0; j < a.weights.size(); ++j)
        if (std::memcmp(a.weights[j].data.data(), b.weights[j].data.data(),
                        a.weights[j].data.size() * sizeof(double)) != 0)
            return false;
    for (std::size_t j = 0; j < a.shifts.size(); ++j)
        if (std::memcmp(a.shifts[j].data(), b.shifts[j].data(),
                        a.shifts[j].size() * sizeof(double)) != 0)
            return false;
    return true;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_7() {
    Timer timer;
    bool pass = true;
    std::ostringstream what;

    // budgets for all 7 variants under both snapshot conventions
    SyntheticSpec synth;
    synth.teacher_spec.depth = 1;
    synth.teacher_spec.widths = {3, 8, 1};
    Rng trng(55);
    synth.teacher_params = init_params<double>(synth.teacher_spec, trng);
    synth.noise_std = 0.2;
    const SyntheticDataset ds = synthetic_regression(synth, 256, 31);
    const auto data = TrainData<double>::from_dataset(ds.data, LossKind::Squared, 1);

    NetworkSpec block;
    block.depth = 1;
    block.widths = {3, 8, 1};

    for (SnapBudget convention : {SnapBudget::SharedRun, SnapBudget::PerCycle}) {
        for (const auto& [variant, name] : variant_names()) {
            TrainPlan plan;
            plan.variant = variant;
            plan.block = block;
            plan.d = 3;
            plan.epochs = 8;
            plan.optimizer.lr = 0.01;
            plan.batch_size = 32;
            plan.master_seed = 17;
            plan.snap_budget = convention;
            const auto run = run_variant(plan, data);
            if (run.budget.epochs_consumed != budget_of(plan)) {
                pass = false;
                what << " budget mismatch in " << name << ";";
            }
            if (run.max_simplex_residual > 1e-12) {
                pass = false;
                what << " simplex residual " << run.max_simplex_residual << " in " << name << ";";
            }
        }
    }

    // freeze contract at the star boundary
    {
        Rng rng(3);
        std::vector<NetParamsD> frozen;
        for (int k = 0; k < 3; ++k) frozen.push_back(init_params<double>(block, rng));
        const std::vector<NetParamsD> before = frozen;
        OptimizerConfig opt;
        opt.lr = 0.01;
        const auto fit = star_d_train(frozen, block, data, 6, 0.4, BlockInit::Fresh,
                                      static_cast<const NetParamsD*>(nullptr), opt,
                                      ScheduleKind::Constant, 32, 5);
        for (int k = 0; k < 3; ++k)
            if (!params_identical(fit.aggregate.members[k], before[k])) {
                pass = false;
                what << " frozen member " << k << " changed;";
            }
    }

    // identical config + seeds => bit-identical report files
    {
        RunConfig cfg;
        cfg.data_path = std::string(STAR_DATA_DIR) + "/housing.csv";
        cfg.target = "price";
        cfg.hidden = {16, 8};
        cfg.dropout = 0.1;
        cfg.batch_norm = true;
        cfg.optimizer.lr = 0.01;
        cfg.epochs = 3;
        cfg.d = 2;
        cfg.batch_size = 32;
        cfg.variants = {Variant::ClassicStarNewWarmup, Variant::Ensemble, Variant::BigNn};
        cfg.seeds = {11, 12};
        cfg.measure_time = false;  // wall time is the one nondeterministic column
        cfg.threads = 2;
        const ExperimentReport a = run_experiment(cfg);
        const ExperimentReport b = run_experiment(cfg);
        emit_report(a, ReportFormat::Json, "acpt_report_a.json");
        emit_report(b, ReportFormat::Json, "acpt_report_b.json");
        if (file_bytes("acpt_report_a.json") != file_bytes("acpt_report_b.json")) {
            pass = false;
            what << " reports differ across identical runs;";
        }
        std::remove("acpt_report_a.json");
        std::remove("acpt_report_b.json");
    }

    report(7, pass,
           "budget equals budget_of for all 7 variants (both snapshot conventions), frozen "
           "members bit-identical, simplex sums within 1e-12, identical config+seed gives "
           "bit-identical reports" + what.str(),
           timer.seconds());
}

// --- criterion 8: selection property ---------------------------------------

void criterion_8() {
    Timer timer;
    NetworkSpec block;
    block.depth = 1;
    block.widths = {2, 8, 1};

    int wins = 0;
    double worst_lambda = 1.0, worst_gap = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        // High-frequency teacher: neither the smooth random members nor a
        // freshly initialized block can produce the oscillations within the
        // budget, so only the planted copy reduces the residual.
        SyntheticSpec synth;
        synth.teacher_spec = block;
        Rng trng(1000 + seed);
        synth.teacher_params = init_params<double>(block, trng);
        for (double& w : synth.teacher_params.weights[0].data) w *= 10.0;
        for (double& v : synth.teacher_params.shifts[0]) v *= 10.0;
        for (double& w : synth.teacher_params.weights[1].data) w *= 2.0;
        synth.noise_std = 0.0;
        const SyntheticDataset ds = synthetic_regression(synth, 128, 2000 + seed);
        const auto data = TrainData<double>::from_dataset(ds.data, LossKind::Squared, 1);

        Rng rng(seed);
        std::vector<NetParamsD> frozen;
        frozen.push_back(init_params<double>(block, rng));
        frozen.push_back(init_params<double>(block, rng));
        frozen.push_back(synth.teacher_params);  // planted zero-risk member
        const std::size_t planted = 2;

        OptimizerConfig opt;
        opt.kind = OptKind::Sgd;
        opt.lr = 0.03;
        opt.momentum = 0.9;
        // no warm-up: the untrained block's convex weight collapses and the
        // planted minimizer takes the mass
        const auto fit = star_d_train(frozen, block, data, 400, 0.0, BlockInit::Fresh,
                                      static_cast<const NetParamsD*>(nullptr), opt,
                                      ScheduleKind::Constant, 32, 300 + seed);
        const auto lam = fit.aggregate.lambda();
        const double planted_risk = eval_risk(block, frozen[planted], data);
        const bool ok = lam[planted] > 0.9 && fit.final_train_risk <= planted_risk + 1e-3;
        if (ok) ++wins;
        worst_lambda = std::min(worst_lambda, lam[planted]);
        worst_gap = std::max(worst_gap, fit.final_train_risk - planted_risk);
    }

    const bool pass = wins == 10;
    std::ostringstream what;
    what << "planted zero-risk member selected on " << wins
         << "/10 seeds (min lambda " << worst_lambda << ", max risk gap " << worst_gap << ")";
    report(8, pass, what.str(), timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    if (argc > 1 && std::string(argv[1]) != "all") {
        which.push_back(std::atoi(argv[1]));
    } else {
        for (int i = 1; i <= 8; ++i) which.push_back(i);
    }

    for (int criterion : which) {
        switch (criterion) {
            case 1: criterion_1(); break;
            case 2: criterion_2(); break;
            case 3: criterion_3(); break;
            case 4: criterion_4(); break;
            case 5: criterion_5(); break;
            case 6: criterion_6(); break;
            case 7: criterion_7(); break;
            case 8: criterion_8(); break;
            default:
                std::cerr << "unknown criterion " << criterion << "\n";
                return 2;
        }
    }
    return g_failures == 0 ? 0 : 1;
}
