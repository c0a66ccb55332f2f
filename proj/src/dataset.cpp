#include "star/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace star {

Dataset Dataset::take(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.task = task;
    out.feature_names = feature_names;
    out.X = MatD(idx.size(), X.cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(X.row(idx[i]), X.row(idx[i]) + X.cols, out.X.row(i));
    if (task == Task::Regression) {
        out.y.reserve(idx.size());
        for (std::size_t i : idx) out.y.push_back(y[i]);
    } else {
        out.labels.reserve(idx.size());
        for (std::size_t i : idx) out.labels.push_back(labels[i]);
    }
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string s = trim(raw);
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value))
        throw IoError("unparseable cell at (row " + std::to_string(row) + ", col " +
                      std::to_string(col) + "): '" + s + "'");
    return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column, bool has_header,
                 Task task) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");

    std::string line;
    std::vector<std::string> header;
    std::size_t n_cols = 0;
    long target_idx = -1;

    if (has_header) {
        if (!std::getline(in, line)) throw IoError("empty file: " + path);
        header = split_line(line);
        for (auto& h : header) h = trim(h);
        n_cols = header.size();
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == target_column) target_idx = static_cast<long>(i);
    }
    if (target_idx < 0) {
        // fall back to a numeric column index
        try {
            target_idx = std::stol(target_column);
        } catch (...) {
            throw IoError("target column '" + target_column + "' not found in " + path);
        }
    }

    std::vector<std::vector<double>> rows;
    std::size_t row_no = has_header ? 1 : 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) { ++row_no; continue; }
        const auto cells = split_line(line);
        if (n_cols == 0) n_cols = cells.size();
        if (cells.size() != n_cols)
            throw IoError("row " + std::to_string(row_no) + " has " +
                          std::to_string(cells.size()) + " cells, expected " +
                          std::to_string(n_cols));
        std::vector<double> vals(n_cols);
        for (std::size_t c = 0; c < n_cols; ++c) vals[c] = parse_cell(cells[c], row_no, c);
        rows.push_back(std::move(vals));
        ++row_no;
    }
    if (rows.empty()) throw IoError("no data rows in " + path);
    if (target_idx >= static_cast<long>(n_cols))
        throw IoError("target column index " + std::to_string(target_idx) + " out of range");

    Dataset ds;
    ds.task = task;
    ds.X = MatD(rows.size(), n_cols - 1);
    for (std::size_t c = 0, k = 0; c < n_cols; ++c) {
        if (static_cast<long>(c) == target_idx) continue;
        if (!header.empty()) ds.feature_names.push_back(header[c]);
        ++k;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::size_t k = 0;
        for (std::size_t c = 0; c < n_cols; ++c) {
            if (static_cast<long>(c) == target_idx) continue;
            ds.X(r, k++) = rows[r][c];
        }
        const double t = rows[r][static_cast<std::size_t>(target_idx)];
        if (task == Task::Regression)
            ds.y.push_back(t);
        else
            ds.labels.push_back(static_cast<int>(std::llround(t)));
    }
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path, const std::string& target_name) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.precision(17);
    for (std::size_t c = 0; c < ds.features(); ++c) {
        if (c < ds.feature_names.size() && !ds.feature_names[c].empty())
            out << ds.feature_names[c];
        else
            out << "x" << c;
        out << ',';
    }
    out << target_name << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.features(); ++c) out << ds.X(r, c) << ',';
        if (ds.task == Task::Regression)
            out << ds.y[r];
        else
            out << ds.labels[r];
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

ScalerState standard_scale_fit(const Dataset& train, bool scale_targets) {
    const std::size_t n = train.size(), p = train.features();
    if (n == 0) throw ShapeError("standard_scale_fit: empty dataset");
    ScalerState s;
    s.mean.assign(p, 0.0);
    s.std.assign(p, 1.0);
    s.scaled.assign(p, true);
    for (std::size_t c = 0; c < p; ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r) m += train.X(r, c);
        m /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double d = train.X(r, c) - m;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        if (sd > 0.0) {
            s.mean[c] = m;
            s.std[c] = sd;
        } else {
            s.scaled[c] = false;  // constant column passes through
        }
    }
    if (scale_targets && train.task == Task::Regression) {
        double m = std::accumulate(train.y.begin(), train.y.end(), 0.0) /
                   static_cast<double>(n);
        double var = 0.0;
        for (double v : train.y) var += (v - m) * (v - m);
        var /= static_cast<double>(n);
        if (var > 0.0) {
            s.targets_scaled = true;
            s.y_mean = m;
            s.y_std = std::sqrt(var);
        }
    }
    return s;
}

Dataset standard_scale_apply(const ScalerState& s, const Dataset& ds) {
    if (ds.features() != s.mean.size())
        throw ShapeError("standard_scale_apply: feature count mismatch");
    Dataset out = ds;
    for (std::size_t c = 0; c < ds.features(); ++c) {
        if (!s.scaled[c]) continue;
        for (std::size_t r = 0; r < ds.size(); ++r)
            out.X(r, c) = (ds.X(r, c) - s.mean[c]) / s.std[c];
    }
    if (s.targets_scaled && ds.task == Task::Regression)
        for (std::size_t r = 0; r < ds.size(); ++r)
            out.y[r] = (ds.y[r] - s.y_mean) / s.y_std;
    return out;
}

std::vector<double> unscale_targets(const ScalerState& s, const std::vector<double>& y) {
    if (!s.targets_scaled) return y;
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * s.y_std + s.y_mean;
    return out;
}

SplitResult split(const Dataset& ds, double ratio, SplitMode mode, std::uint64_t seed) {
    if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("split: ratio must lie in (0,1)");
    const std::size_t n = ds.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n_train == 0 || n_train == n)
        throw ConfigError("split: one side would be empty (n=" + std::to_string(n) + ")");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (mode == SplitMode::Shuffled) {
        Rng rng(seed);
        rng.shuffle(idx);
    }
    const std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + n_train);
    const std::vector<std::size_t> test_idx(idx.begin() + n_train, idx.end());
    return SplitResult{ds.take(train_idx), ds.take(test_idx)};
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw ConfigError("batches: batch_size must be >= 1");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(Rng(seed).child(static_cast<std::uint64_t>(epoch)).next_u64());
    rng.shuffle(idx);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t at = 0; at < n; at += batch_size) {
        const std::size_t end = std::min(at + batch_size, n);
        out.emplace_back(idx.begin() + at, idx.begin() + end);
    }
    return out;
}

SyntheticDataset synthetic_regression(const SyntheticSpec& spec, std::size_t n,
                                      std::uint64_t seed) {
    if (n < 1) throw ConfigError("synthetic_regression: n must be >= 1");
    spec.teacher_spec.validate();
    if (spec.teacher_spec.output_dim() != 1)
        throw ShapeError("synthetic_regression: teacher output width must be 1");

    Rng rng(seed);
    Rng x_rng = rng.child(0);
    Rng noise_rng = rng.child(1);

    const std::size_t p = spec.teacher_spec.input_dim();
    SyntheticDataset out;
    out.data.task = Task::Regression;
    out.data.X = MatD(n, p);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < p; ++c)
            out.data.X(r, c) = spec.input == InputDist::UniformCube
                                   ? x_rng.uniform(-1.0, 1.0)
                                   : x_rng.normal();

    NetParamsD teacher = spec.teacher_params;
    Mat<double> f = batch_forward(spec.teacher_spec, teacher, out.data.X, Mode::Eval);
    out.clean_targets.resize(n);
    out.data.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        out.clean_targets[r] = f(r, 0);
        out.data.y[r] = f(r, 0) + (spec.noise_std > 0.0 ? noise_rng.normal(0.0, spec.noise_std)
                                                        : 0.0);
    }
    out.noise_variance = spec.noise_std * spec.noise_std;
    return out;
}

}  // namespace star
