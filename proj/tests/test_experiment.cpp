#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "star/experiment.hpp"

using namespace star;

namespace {

// small synthetic regression CSV on disk
std::string write_task_csv(const std::string& path, std::size_t n, std::uint64_t seed) {
    SyntheticSpec synth;
    synth.teacher_spec.depth = 1;
    synth.teacher_spec.widths = {3, 6, 1};
    Rng rng(909);
    synth.teacher_params = init_params<double>(synth.teacher_spec, rng);
    synth.noise_std = 0.3;
    const SyntheticDataset data = synthetic_regression(synth, n, seed);
    save_csv(data.data, path, "target");
    return path;
}

RunConfig base_config(const std::string& csv) {
    RunConfig cfg;
    cfg.data_path = csv;
    cfg.target = "target";
    cfg.split_ratio = 0.7;
    cfg.split_seed = 3;
    cfg.hidden = {6};
    cfg.optimizer.lr = 0.01;
    cfg.epochs = 2;
    cfg.d = 2;
    cfg.batch_size = 32;
    cfg.variants = {Variant::Ensemble};
    cfg.seeds = {1, 2};
    cfg.measure_time = false;
    return cfg;
}

}  // namespace

TEST_CASE("config parsing: full round trip of keys") {
    const std::string text = R"(
# comment
data.path = some.csv
data.target = price
data.task = regression
split.ratio = 0.8
split.mode = tail
split.seed = 11
scale.features = true
scale.targets = false
net.hidden = 32,16
net.dropout = 0.2
net.batch_norm = true
optimizer = sgd
lr = 0.1
momentum = 0.9
schedule = cosine_cyclic
snap.optimizer = sgd
snap.lr = 0.1
snap.budget = per_cycle
epochs = 30
d = 4
warmup_fraction = 0.1
batch_size = 128
precision = f32
variants = snap_star_shot_warmup,big_nn
seeds = 5,6,7
measure_time = false
threads = 2
)";
    const RunConfig cfg = parse_run_config_text(text);
    CHECK(cfg.data_path == "some.csv");
    CHECK(cfg.target == "price");
    CHECK(cfg.split_ratio == 0.8);
    CHECK(cfg.split_mode == SplitMode::Tail);
    CHECK(cfg.hidden == std::vector<int>{32, 16});
    CHECK(cfg.dropout == 0.2);
    CHECK(cfg.batch_norm);
    CHECK(cfg.optimizer.kind == OptKind::Sgd);
    CHECK(cfg.optimizer.momentum == 0.9);
    CHECK(cfg.schedule == ScheduleKind::CosineCyclic);
    REQUIRE(cfg.snap_optimizer.has_value());
    CHECK(cfg.snap_optimizer->lr == 0.1);
    CHECK(cfg.snap_budget == SnapBudget::PerCycle);
    CHECK(cfg.warmup_fraction == 0.1);
    CHECK(cfg.precision == Precision::F32);
    CHECK(cfg.variants.size() == 2);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{5, 6, 7});
    CHECK_FALSE(cfg.measure_time);
}

TEST_CASE("config parsing: unknown keys and malformed lines are rejected") {
    CHECK_THROWS_AS(parse_run_config_text("variants = ensemble\nseeds = 1\nbogus.key = 3\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("variants ensemble\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("variants = ensemble\n"), ConfigError);  // no seeds
}

TEST_CASE("run_experiment: all seven variants emit one row each") {
    const std::string csv = write_task_csv("exp_task.csv", 160, 4);
    RunConfig cfg = base_config(csv);
    cfg.variants.clear();
    for (const auto& [variant, name] : variant_names()) cfg.variants.push_back(variant);
    cfg.seeds = {1, 2, 3, 4, 5};

    const ExperimentReport rep = run_experiment(cfg);
    REQUIRE(rep.rows.size() == 7);
    for (std::size_t v = 0; v < rep.rows.size(); ++v) {
        const auto& row = rep.rows[v];
        CHECK(row.name == variant_name(cfg.variants[v]));  // declared order
        CHECK(row.error.empty());
        CHECK(row.seed_count == 5);
        CHECK(row.primary_std >= 0.0);
        CHECK(std::isfinite(row.primary_mean));
        CHECK(row.mae.has_value());
        CHECK(row.budget_epochs > 0);
        CHECK(row.time_sec == 0.0);  // measure_time off
    }
    std::remove(csv.c_str());
}

TEST_CASE("run_experiment: identical config and seeds give identical reports") {
    const std::string csv = write_task_csv("exp_det.csv", 120, 9);
    RunConfig cfg = base_config(csv);
    cfg.variants = {Variant::ClassicStarNewWarmup, Variant::SnapEnsemble};
    cfg.threads = 2;

    const ExperimentReport a = run_experiment(cfg);
    const ExperimentReport b = run_experiment(cfg);
    emit_report(a, ReportFormat::Csv, "exp_det_a.csv");
    emit_report(b, ReportFormat::Csv, "exp_det_b.csv");
    std::ifstream fa("exp_det_a.csv"), fb("exp_det_b.csv");
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    std::remove("exp_det_a.csv");
    std::remove("exp_det_b.csv");
    std::remove(csv.c_str());
}

TEST_CASE("run_experiment: a diverging variant is recorded without aborting the rest") {
    const std::string csv = write_task_csv("exp_err.csv", 120, 5);
    RunConfig cfg = base_config(csv);
    cfg.variants = {Variant::BigNn, Variant::Ensemble};
    cfg.optimizer.kind = OptKind::Sgd;  // sgd at an absurd lr runs away to inf
    cfg.optimizer.lr = 1e18;
    const ExperimentReport rep = run_experiment(cfg);
    REQUIRE(rep.rows.size() == 2);
    CHECK_FALSE(rep.rows[0].error.empty());
    CHECK_FALSE(rep.rows[1].error.empty());

    // now only one variant diverges: give it a poisoned optimizer via snap
    RunConfig half = base_config(csv);
    half.variants = {Variant::SnapEnsemble, Variant::Ensemble};
    half.snap_optimizer = OptimizerConfig{OptKind::Sgd, 1e18, 0.0, 0.9, 0.999, 1e-8};
    const ExperimentReport rep2 = run_experiment(half);
    REQUIRE(rep2.rows.size() == 2);
    CHECK_FALSE(rep2.rows[0].error.empty());  // snapshot run diverges
    CHECK(rep2.rows[1].error.empty());        // plain ensemble unaffected
    CHECK(std::isfinite(rep2.rows[1].primary_mean));
    std::remove(csv.c_str());
}

TEST_CASE("run_experiment: float32 lane works behind the precision switch") {
    const std::string csv = write_task_csv("exp_f32.csv", 120, 6);
    RunConfig cfg = base_config(csv);
    cfg.precision = Precision::F32;
    cfg.variants = {Variant::ClassicStarNewWarmup};
    const ExperimentReport rep = run_experiment(cfg);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].error.empty());
    CHECK(std::isfinite(rep.rows[0].primary_mean));
    std::remove(csv.c_str());
}

TEST_CASE("run_experiment: classification lane emits accuracy and entropy") {
    // two-class task: label = sign of a noisy linear score
    Rng rng(77);
    Dataset ds;
    ds.task = Task::Classification;
    ds.X = MatD(240, 3);
    for (double& v : ds.X.data) v = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double score = 1.2 * ds.X(i, 0) - 0.8 * ds.X(i, 1) + 0.3 * ds.X(i, 2) +
                             rng.normal(0.0, 0.2);
        ds.labels.push_back(score > 0.0 ? 1 : 0);
    }
    save_csv(ds, "exp_cls.csv", "label");

    RunConfig cfg = base_config("exp_cls.csv");
    cfg.target = "label";
    cfg.task = Task::Classification;
    cfg.n_classes = 2;
    cfg.hidden = {8};
    cfg.epochs = 30;
    cfg.optimizer.lr = 0.01;
    cfg.variants = {Variant::Ensemble, Variant::ClassicStarNewWarmup, Variant::BigNn};
    cfg.seeds = {1, 2};

    const ExperimentReport rep = run_experiment(cfg);
    REQUIRE(rep.rows.size() == 3);
    for (const auto& row : rep.rows) {
        INFO(row.name);
        CHECK(row.error.empty());
        CHECK(row.primary_mean > 0.7);  // accuracy on an easy linear task
        CHECK(row.primary_mean <= 1.0);
        REQUIRE(row.entropy_mean.has_value());
        CHECK(*row.entropy_mean > 0.0);
        CHECK_FALSE(row.mae.has_value());
    }
    emit_report(rep, ReportFormat::Markdown, "exp_cls.md");
    std::ifstream in("exp_cls.md");
    std::string header;
    std::getline(in, header);
    CHECK(header == "| Name | d | accuracy | entropy | TIME (sec) |");
    std::remove("exp_cls.md");
    std::remove("exp_cls.csv");
}

TEST_CASE("run_variant: member-parallel training is schedule-independent") {
    SyntheticSpec synth;
    synth.teacher_spec.depth = 1;
    synth.teacher_spec.widths = {3, 6, 1};
    Rng rng(42);
    synth.teacher_params = init_params<double>(synth.teacher_spec, rng);
    synth.noise_std = 0.2;
    const SyntheticDataset ds = synthetic_regression(synth, 150, 8);
    const auto data = TrainData<double>::from_dataset(ds.data, LossKind::Squared, 1);

    TrainPlan plan;
    plan.variant = Variant::Ensemble;
    plan.block = synth.teacher_spec;
    plan.d = 3;
    plan.epochs = 4;
    plan.optimizer.lr = 0.01;
    plan.master_seed = 5;

    plan.parallel_members = false;
    const auto serial = run_variant(plan, data);
    plan.parallel_members = true;
    const auto parallel = run_variant(plan, data);
    CHECK(serial.final_train_risk == parallel.final_train_risk);
    for (std::size_t k = 0; k < serial.predictor.members.size(); ++k)
        for (std::size_t j = 0; j < serial.predictor.members[k].weights.size(); ++j)
            CHECK(serial.predictor.members[k].weights[j].data ==
                  parallel.predictor.members[k].weights[j].data);
}
