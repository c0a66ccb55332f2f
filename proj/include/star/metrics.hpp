#pragma once

#include <optional>
#include <vector>

#include "star/dataset.hpp"
#include "star/matrix.hpp"

namespace star {

struct RegressionMetrics {
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> r2;  // null when SST = 0
};

struct ClassificationMetrics {
    double accuracy = 0.0;
    double entropy = 0.0;  // mean cross-entropy of the predicted distribution
};

RegressionMetrics regression_metrics(const std::vector<double>& predictions,
                                     const std::vector<double>& targets);

// `probs` holds one row of class probabilities per sample.
ClassificationMetrics classification_metrics(const MatD& probs, const std::vector<int>& labels);

}  // namespace star
