#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace marketgame {

using Vector = std::vector<double>;

/// l1 norm; all vectors in this library are non-negative so this is a plain sum.
inline double l1(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline bool all_nonnegative(std::span<const double> x) {
    for (double v : x)
        if (!(v >= 0.0) || !std::isfinite(v)) return false;
    return true;
}

/// Dense row-major matrix. Rows are investors, columns are assets.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double column_sum(std::size_t c) const {
        double s = 0.0;
        for (std::size_t r = 0; r < rows_; ++r) s += (*this)(r, c);
        return s;
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Raised when an investor's spending at a jump node exceeds available wealth.
class BudgetViolation : public std::runtime_error {
public:
    BudgetViolation(std::size_t investor, double excess)
        : std::runtime_error("budget violation by investor " + std::to_string(investor + 1) +
                             ": spending exceeds wealth by " + std::to_string(excess)),
          investor_(investor), excess_(excess) {}

    std::size_t investor() const { return investor_; }
    double excess() const { return excess_; }

private:
    std::size_t investor_;
    double excess_;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace marketgame
