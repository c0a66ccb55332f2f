#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "star/dataset.hpp"

namespace star {

// One table row: a variant aggregated over seeds.
struct ExperimentRow {
    std::string name;
    int d = 0;
    int seed_count = 0;
    // regression: primary = MSE; classification: primary = accuracy
    double primary_mean = 0.0;
    double primary_std = 0.0;
    std::optional<double> mae;
    std::optional<double> r2;
    std::optional<double> entropy_mean;
    std::optional<double> entropy_std;
    double train_metric = 0.0;
    long budget_epochs = 0;
    double time_sec = 0.0;
    std::string error;  // non-empty when the variant failed
};

struct ExperimentReport {
    Task task = Task::Regression;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::vector<ExperimentRow> rows;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

enum class ReportFormat { Csv, Json, Markdown };

ReportFormat report_format_from_name(const std::string& name);

// Deterministic serialization; CSV/JSON keep full precision, markdown is
// rounded to 3 decimals for display.
void emit_report(const ExperimentReport& report, ReportFormat format, const std::string& path);

// Parse-back of the CSV emission (round-trip tests).
ExperimentReport read_report_csv(const std::string& path, Task task);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace star
