#pragma once

#include <optional>
#include <string>
#include <vector>

#include "star/matrix.hpp"
#include "star/net.hpp"
#include "star/rng.hpp"

namespace star {

enum class Task { Regression, Classification };

struct Dataset {
    MatD X;                                 // n x p
    std::vector<double> y;                  // regression targets
    std::vector<int> labels;                // classification targets
    std::vector<std::string> feature_names;
    Task task = Task::Regression;

    std::size_t size() const { return X.rows; }
    std::size_t features() const { return X.cols; }

    Dataset take(const std::vector<std::size_t>& idx) const;
};

// Parses a comma-separated numeric file. `target_column` is a header name or
// a 0-based index when the name does not match / no header is present.
Dataset load_csv(const std::string& path, const std::string& target_column,
                 bool has_header = true, Task task = Task::Regression);

void save_csv(const Dataset& ds, const std::string& path, const std::string& target_name);

struct ScalerState {
    std::vector<double> mean, std;
    std::vector<bool> scaled;         // constant columns pass through
    bool targets_scaled = false;
    double y_mean = 0.0, y_std = 1.0;
};

ScalerState standard_scale_fit(const Dataset& train, bool scale_targets);
Dataset standard_scale_apply(const ScalerState& s, const Dataset& ds);
std::vector<double> unscale_targets(const ScalerState& s, const std::vector<double>& y);

enum class SplitMode { Shuffled, Tail };

struct SplitResult {
    Dataset train, test;
};

// ratio = train fraction. Tail mode keeps the final (1-ratio) rows, in
// original order, as the test set.
SplitResult split(const Dataset& ds, double ratio, SplitMode mode, std::uint64_t seed);

// Per-epoch reshuffle keyed by (seed, epoch); the short final batch is kept.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, int epoch);

enum class InputDist { UniformCube, StandardNormal };

struct SyntheticSpec {
    NetworkSpec teacher_spec;
    NetParamsD teacher_params;
    InputDist input = InputDist::UniformCube;
    double noise_std = 0.0;
};

struct SyntheticDataset {
    Dataset data;
    std::vector<double> clean_targets;  // f*(X_i), before noise
    double noise_variance = 0.0;
};

SyntheticDataset synthetic_regression(const SyntheticSpec& spec, std::size_t n,
                                      std::uint64_t seed);

}  // namespace star
