#include "star/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace star {

RegressionMetrics regression_metrics(const std::vector<double>& predictions,
                                     const std::vector<double>& targets) {
    if (predictions.size() != targets.size())
        throw ShapeError("regression_metrics: length mismatch");
    if (predictions.empty()) throw ShapeError("regression_metrics: empty input");
    const double n = static_cast<double>(predictions.size());

    RegressionMetrics m;
    double sse = 0.0, abs_sum = 0.0, y_mean = 0.0;
    for (double y : targets) y_mean += y;
    y_mean /= n;
    double sst = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions[i] - targets[i];
        sse += e * e;
        abs_sum += std::abs(e);
        sst += (targets[i] - y_mean) * (targets[i] - y_mean);
    }
    m.mse = sse / n;
    m.mae = abs_sum / n;
    if (sst > 0.0) m.r2 = 1.0 - sse / sst;
    return m;
}

ClassificationMetrics classification_metrics(const MatD& probs, const std::vector<int>& labels) {
    if (probs.rows != labels.size()) throw ShapeError("classification_metrics: length mismatch");
    if (probs.rows == 0) throw ShapeError("classification_metrics: empty input");

    ClassificationMetrics m;
    std::size_t correct = 0;
    double ce = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* p = probs.row(i);
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < probs.cols; ++c)
            if (p[c] > p[argmax]) argmax = c;
        const int y = labels[i];
        if (y < 0 || y >= static_cast<int>(probs.cols))
            throw ShapeError("classification_metrics: label out of range");
        if (static_cast<int>(argmax) == y) ++correct;
        ce += -std::log(std::max(p[y], 1e-300));
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(probs.rows);
    m.entropy = ce / static_cast<double>(probs.rows);
    return m;
}

}  // namespace star
