#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "star/dataset.hpp"
#include "star/ensemble.hpp"
#include "star/report.hpp"

namespace star {

enum class Precision { F64, F32 };

struct RunConfig {
    // dataset
    std::string data_path;
    std::string target = "0";
    bool has_header = true;
    Task task = Task::Regression;
    double split_ratio = 0.7;
    SplitMode split_mode = SplitMode::Shuffled;
    std::uint64_t split_seed = 0;
    bool scale_features = true;
    bool scale_targets = false;
    // model
    std::vector<int> hidden = {16};
    double dropout = 0.0;
    bool batch_norm = false;
    int n_classes = 0;  // classification output width
    // training
    OptimizerConfig optimizer;
    std::optional<OptimizerConfig> snap_optimizer;
    ScheduleKind schedule = ScheduleKind::Constant;
    SnapBudget snap_budget = SnapBudget::SharedRun;
    int epochs = 10;
    int d = 1;
    double warmup_fraction = 0.4;
    std::size_t batch_size = 32;
    Precision precision = Precision::F64;
    // run
    std::vector<Variant> variants;
    std::vector<std::uint64_t> seeds;
    bool measure_time = true;
    int threads = 1;

    std::string canonical_text() const;  // hashed into reports
    void validate() const;
};

// Flat `key = value` text, '#' comments. Unknown keys are an error.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);

ExperimentReport run_experiment(const RunConfig& config, const Dataset& ds);
ExperimentReport run_experiment(const RunConfig& config);  // loads config.data_path

}  // namespace star
