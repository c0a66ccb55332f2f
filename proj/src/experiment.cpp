#include "star/experiment.hpp"

#include <chrono>
#include <fstream>
#include <future>
#include <sstream>

#include "star/metrics.hpp"

namespace star {

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("config: boolean expected for '" + key + "', got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

OptKind opt_kind_from(const std::string& v) {
    if (v == "adam") return OptKind::Adam;
    if (v == "sgd") return OptKind::Sgd;
    throw ConfigError("config: unknown optimizer '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
    if (variants.empty()) throw ConfigError("config: at least one variant required");
    if (seeds.empty()) throw ConfigError("config: at least one seed required");
    if (task == Task::Classification && n_classes < 2)
        throw ConfigError("config: classification needs n_classes >= 2");
    if (threads < 1) throw ConfigError("config: threads must be >= 1");
}

std::string RunConfig::canonical_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "data=" << data_path << ";target=" << target << ";header=" << has_header
       << ";task=" << static_cast<int>(task) << ";ratio=" << split_ratio
       << ";mode=" << static_cast<int>(split_mode) << ";split_seed=" << split_seed
       << ";scale_x=" << scale_features << ";scale_y=" << scale_targets << ";hidden=";
    for (int h : hidden) os << h << ' ';
    os << ";dropout=" << dropout << ";bn=" << batch_norm << ";classes=" << n_classes
       << ";opt=" << static_cast<int>(optimizer.kind) << ";lr=" << optimizer.lr
       << ";mom=" << optimizer.momentum;
    if (snap_optimizer)
        os << ";snap_opt=" << static_cast<int>(snap_optimizer->kind)
           << ";snap_lr=" << snap_optimizer->lr;
    os << ";sched=" << static_cast<int>(schedule) << ";snap_budget=" << static_cast<int>(snap_budget)
       << ";epochs=" << epochs << ";d=" << d << ";warmup=" << warmup_fraction
       << ";batch=" << batch_size << ";prec=" << static_cast<int>(precision) << ";variants=";
    for (Variant v : variants) os << variant_name(v) << ' ';
    os << ";seeds=";
    for (std::uint64_t s : seeds) os << s << ' ';
    return os.str();
}

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            std::size_t a = 0, b = s.size();
            while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
            while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
            return s.substr(a, b - a);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    bool snap_opt_set = false;
    OptimizerConfig snap_cfg;
    snap_cfg.kind = OptKind::Sgd;
    snap_cfg.lr = 0.1;

    for (const auto& [key, value] : kv) {
        if (key == "data.path") cfg.data_path = value;
        else if (key == "data.target") cfg.target = value;
        else if (key == "data.has_header") cfg.has_header = parse_bool(value, key);
        else if (key == "data.task") {
            if (value == "regression") cfg.task = Task::Regression;
            else if (value == "classification") cfg.task = Task::Classification;
            else throw ConfigError("config: unknown task '" + value + "'");
        }
        else if (key == "data.n_classes") cfg.n_classes = std::stoi(value);
        else if (key == "split.ratio") cfg.split_ratio = std::stod(value);
        else if (key == "split.mode") {
            if (value == "shuffled") cfg.split_mode = SplitMode::Shuffled;
            else if (value == "tail") cfg.split_mode = SplitMode::Tail;
            else throw ConfigError("config: unknown split mode '" + value + "'");
        }
        else if (key == "split.seed") cfg.split_seed = std::stoull(value);
        else if (key == "scale.features") cfg.scale_features = parse_bool(value, key);
        else if (key == "scale.targets") cfg.scale_targets = parse_bool(value, key);
        else if (key == "net.hidden") {
            cfg.hidden.clear();
            for (const auto& tok : split_list(value)) cfg.hidden.push_back(std::stoi(tok));
        }
        else if (key == "net.dropout") cfg.dropout = std::stod(value);
        else if (key == "net.batch_norm") cfg.batch_norm = parse_bool(value, key);
        else if (key == "optimizer") cfg.optimizer.kind = opt_kind_from(value);
        else if (key == "lr") cfg.optimizer.lr = std::stod(value);
        else if (key == "momentum") cfg.optimizer.momentum = std::stod(value);
        else if (key == "schedule") {
            if (value == "constant") cfg.schedule = ScheduleKind::Constant;
            else if (value == "cosine_cyclic") cfg.schedule = ScheduleKind::CosineCyclic;
            else throw ConfigError("config: unknown schedule '" + value + "'");
        }
        else if (key == "snap.optimizer") { snap_cfg.kind = opt_kind_from(value); snap_opt_set = true; }
        else if (key == "snap.lr") { snap_cfg.lr = std::stod(value); snap_opt_set = true; }
        else if (key == "snap.budget") {
            if (value == "shared_run") cfg.snap_budget = SnapBudget::SharedRun;
            else if (value == "per_cycle") cfg.snap_budget = SnapBudget::PerCycle;
            else throw ConfigError("config: unknown snap budget '" + value + "'");
        }
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "d") cfg.d = std::stoi(value);
        else if (key == "warmup_fraction") cfg.warmup_fraction = std::stod(value);
        else if (key == "batch_size") cfg.batch_size = static_cast<std::size_t>(std::stoul(value));
        else if (key == "precision") {
            if (value == "f64") cfg.precision = Precision::F64;
            else if (value == "f32") cfg.precision = Precision::F32;
            else throw ConfigError("config: unknown precision '" + value + "'");
        }
        else if (key == "variants") {
            cfg.variants.clear();
            for (const auto& tok : split_list(value)) cfg.variants.push_back(variant_from_name(tok));
        }
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& tok : split_list(value)) cfg.seeds.push_back(std::stoull(tok));
        }
        else if (key == "measure_time") cfg.measure_time = parse_bool(value, key);
        else if (key == "threads") cfg.threads = std::stoi(value);
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    if (snap_opt_set) cfg.snap_optimizer = snap_cfg;
    cfg.validate();
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config_text(text.str());
}

namespace {

NetworkSpec block_spec_of(const RunConfig& cfg, std::size_t input_dim) {
    NetworkSpec spec;
    spec.depth = static_cast<int>(cfg.hidden.size());
    spec.widths.push_back(static_cast<int>(input_dim));
    for (int h : cfg.hidden) spec.widths.push_back(h);
    spec.widths.push_back(cfg.task == Task::Regression ? 1 : cfg.n_classes);
    spec.dropout_prob = cfg.dropout;
    spec.use_batch_norm = cfg.batch_norm;
    spec.validate();
    return spec;
}

TrainPlan plan_of(const RunConfig& cfg, const NetworkSpec& spec, Variant variant,
                  std::uint64_t seed) {
    TrainPlan plan;
    plan.variant = variant;
    plan.block = spec;
    plan.d = cfg.d;
    plan.epochs = cfg.epochs;
    plan.warmup_fraction = cfg.warmup_fraction;
    plan.optimizer = cfg.optimizer;
    plan.snap_optimizer = cfg.snap_optimizer;
    plan.schedule = cfg.schedule;
    plan.batch_size = cfg.batch_size;
    plan.master_seed = seed;
    plan.snap_budget = cfg.snap_budget;
    plan.loss = cfg.task == Task::Regression ? LossKind::Squared : LossKind::CrossEntropy;
    return plan;
}

struct SeedOutcome {
    double primary = 0.0;
    double secondary_mae = 0.0;
    double secondary_r2 = 0.0;
    bool has_r2 = false;
    double entropy = 0.0;
    double train_metric = 0.0;
    long budget = 0;
    double seconds = 0.0;
    std::string error;
};

template <typename T>
SeedOutcome run_one(const RunConfig& cfg, const NetworkSpec& spec, Variant variant,
                    std::uint64_t seed, const Dataset& train_scaled, const Dataset& test_scaled,
                    const ScalerState& scaler, const Dataset& train_raw,
                    const Dataset& test_raw) {
    SeedOutcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const TrainPlan plan = plan_of(cfg, spec, variant, seed);
        const auto data = TrainData<T>::from_dataset(train_scaled, plan.loss, spec.output_dim());
        VariantRun<T> run = run_variant(plan, data);
        if (run.budget.epochs_consumed != budget_of(plan))
            throw NumericError("budget mismatch: measured " +
                               std::to_string(run.budget.epochs_consumed) + " vs planned " +
                               std::to_string(budget_of(plan)));
        out.budget = run.budget.epochs_consumed;

        if (cfg.task == Task::Regression) {
            MatD yhat_test = predict(run.predictor, test_scaled.X);
            MatD yhat_train = predict(run.predictor, train_scaled.X);
            std::vector<double> pt(yhat_test.data.begin(), yhat_test.data.end());
            std::vector<double> pr(yhat_train.data.begin(), yhat_train.data.end());
            // metrics live in original target units
            pt = unscale_targets(scaler, pt);
            pr = unscale_targets(scaler, pr);
            const RegressionMetrics mt = regression_metrics(pt, test_raw.y);
            const RegressionMetrics mr = regression_metrics(pr, train_raw.y);
            out.primary = mt.mse;
            out.secondary_mae = mt.mae;
            if (mt.r2) {
                out.secondary_r2 = *mt.r2;
                out.has_r2 = true;
            }
            out.train_metric = mr.mse;
        } else {
            MatD probs_test = predict_probs(run.predictor, test_scaled.X);
            MatD probs_train = predict_probs(run.predictor, train_scaled.X);
            const ClassificationMetrics mt = classification_metrics(probs_test, test_raw.labels);
            const ClassificationMetrics mr =
                classification_metrics(probs_train, train_raw.labels);
            out.primary = mt.accuracy;
            out.entropy = mt.entropy;
            out.train_metric = mr.entropy;
        }
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    const auto t1 = std::chrono::steady_clock::now();
    out.seconds = std::chrono::duration<double>(t1 - t0).count();
    return out;
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& config, const Dataset& ds) {
    config.validate();
    const SplitResult parts = split(ds, config.split_ratio, config.split_mode, config.split_seed);
    ScalerState scaler;
    if (config.scale_features || config.scale_targets) {
        scaler = standard_scale_fit(parts.train, config.scale_targets);
        if (!config.scale_features)
            for (std::size_t c = 0; c < scaler.scaled.size(); ++c) scaler.scaled[c] = false;
    } else {
        scaler.mean.assign(parts.train.features(), 0.0);
        scaler.std.assign(parts.train.features(), 1.0);
        scaler.scaled.assign(parts.train.features(), false);
    }
    const Dataset train_scaled = standard_scale_apply(scaler, parts.train);
    const Dataset test_scaled = standard_scale_apply(scaler, parts.test);

    const NetworkSpec spec = block_spec_of(config, ds.features());

    ExperimentReport report;
    report.task = config.task;
    report.seeds = config.seeds;
    report.config_hash = std::to_string(fnv1a_hash(config.canonical_text()));

    struct Job {
        std::size_t variant_idx;
        std::size_t seed_idx;
    };
    std::vector<Job> jobs;
    for (std::size_t v = 0; v < config.variants.size(); ++v)
        for (std::size_t s = 0; s < config.seeds.size(); ++s) jobs.push_back({v, s});

    std::vector<SeedOutcome> outcomes(jobs.size());
    auto worker = [&](std::size_t j) {
        const Variant variant = config.variants[jobs[j].variant_idx];
        const std::uint64_t seed = config.seeds[jobs[j].seed_idx];
        outcomes[j] = config.precision == Precision::F64
                          ? run_one<double>(config, spec, variant, seed, train_scaled,
                                            test_scaled, scaler, parts.train, parts.test)
                          : run_one<float>(config, spec, variant, seed, train_scaled,
                                           test_scaled, scaler, parts.train, parts.test);
    };

    if (config.threads > 1) {
        std::size_t at = 0;
        while (at < jobs.size()) {
            std::vector<std::future<void>> batch;
            for (int t = 0; t < config.threads && at < jobs.size(); ++t, ++at)
                batch.push_back(std::async(std::launch::async, worker, at));
            for (auto& f : batch) f.get();
        }
    } else {
        for (std::size_t j = 0; j < jobs.size(); ++j) worker(j);
    }

    for (std::size_t v = 0; v < config.variants.size(); ++v) {
        ExperimentRow row;
        row.name = variant_name(config.variants[v]);
        row.d = config.d;
        row.seed_count = static_cast<int>(config.seeds.size());

        std::vector<double> primary, maes, r2s, entropies, trains;
        double seconds = 0.0;
        long budget = 0;
        std::string error;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            if (jobs[j].variant_idx != v) continue;
            const SeedOutcome& o = outcomes[j];
            if (!o.error.empty()) {
                error = o.error;
                continue;
            }
            primary.push_back(o.primary);
            maes.push_back(o.secondary_mae);
            if (o.has_r2) r2s.push_back(o.secondary_r2);
            entropies.push_back(o.entropy);
            trains.push_back(o.train_metric);
            seconds += o.seconds;
            budget = o.budget;
        }
        if (primary.empty()) {
            row.error = error.empty() ? "no successful runs" : error;
            report.rows.push_back(std::move(row));
            continue;
        }
        if (!error.empty()) row.error = error;  // partial failure, still aggregated

        const MeanStd p = mean_std(primary);
        row.primary_mean = p.mean;
        row.primary_std = p.std;
        if (config.task == Task::Regression) {
            row.mae = mean_std(maes).mean;
            if (!r2s.empty()) row.r2 = mean_std(r2s).mean;
        } else {
            const MeanStd e = mean_std(entropies);
            row.entropy_mean = e.mean;
            row.entropy_std = e.std;
        }
        row.train_metric = mean_std(trains).mean;
        row.budget_epochs = budget;
        row.time_sec = config.measure_time
                           ? seconds / static_cast<double>(primary.size())
                           : 0.0;
        report.rows.push_back(std::move(row));
    }
    return report;
}

ExperimentReport run_experiment(const RunConfig& config) {
    const Dataset ds = load_csv(config.data_path, config.target, config.has_header, config.task);
    return run_experiment(config, ds);
}

}  // namespace star
