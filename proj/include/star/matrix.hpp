#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace star {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Row-major dense matrix. Rows are contiguous so the hot training loops
// reduce to dot products / axpys over contiguous spans.
template <typename T>
struct Mat {
    std::size_t rows = 0, cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    T* row(std::size_t i) { return data.data() + i * cols; }
    const T* row(std::size_t i) const { return data.data() + i * cols; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using MatD = Mat<double>;
using MatF = Mat<float>;

template <typename T>
bool all_finite(const Mat<T>& m) {
    for (const T& x : m.data)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
    for (const T& x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace star
