#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mfsr {

/// Compressed sparse row matrix. Only the handful of operations the
/// degradation chain needs: mat-vec, row-times-matrix product, densify.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols), row_start_(1, 0) {
        row_start_.reserve(static_cast<std::size_t>(rows) + 1);
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t nonzeros() const noexcept { return values_.size(); }

    /// Appends one entry to the row currently being built.
    void push(int col, double value) {
        cols_idx_.push_back(col);
        values_.push_back(value);
    }
    /// Closes the current row. Must be called exactly rows() times.
    void finish_row() { row_start_.push_back(values_.size()); }

    bool complete() const noexcept {
        return row_start_.size() == static_cast<std::size_t>(rows_) + 1;
    }

    std::span<const int> row_cols(int r) const {
        return {cols_idx_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
    }
    std::span<const double> row_values(int r) const {
        return {values_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
    }

    void multiply(std::span<const double> in, std::span<double> out) const {
        for (int r = 0; r < rows_; ++r) {
            double acc = 0.0;
            for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
                acc += values_[k] * in[cols_idx_[k]];
            }
            out[r] = acc;
        }
    }

    /// this * rhs, accumulated through a dense scratch row.
    SparseMatrix times(const SparseMatrix& rhs) const {
        if (cols_ != rhs.rows_) {
            throw std::invalid_argument("SparseMatrix::times: inner dimensions " +
                                        std::to_string(cols_) + " vs " +
                                        std::to_string(rhs.rows_));
        }
        SparseMatrix out(rows_, rhs.cols_);
        std::vector<double> scratch(static_cast<std::size_t>(rhs.cols_), 0.0);
        std::vector<char> used(static_cast<std::size_t>(rhs.cols_), 0);
        std::vector<int> touched;
        for (int r = 0; r < rows_; ++r) {
            touched.clear();
            for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
                const int mid = cols_idx_[k];
                const double a = values_[k];
                for (std::size_t m = rhs.row_start_[mid]; m < rhs.row_start_[mid + 1]; ++m) {
                    const int c = rhs.cols_idx_[m];
                    if (!used[c]) {
                        used[c] = 1;
                        touched.push_back(c);
                    }
                    scratch[c] += a * rhs.values_[m];
                }
            }
            std::sort(touched.begin(), touched.end());
            for (int c : touched) {
                out.push(c, scratch[c]);
                scratch[c] = 0.0;
                used[c] = 0;
            }
            out.finish_row();
        }
        return out;
    }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows_, cols_);
        for (int r = 0; r < rows_; ++r) {
            for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
                d(r, cols_idx_[k]) += values_[k];
            }
        }
        return d;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<std::size_t> row_start_{0};
    std::vector<int> cols_idx_;
    std::vector<double> values_;
};

/// A linear map R^in_dim -> R^out_dim, held either as one sparse matrix or
/// as a chain of factors applied right to left.
class LinearOperator {
public:
    LinearOperator() = default;

    explicit LinearOperator(SparseMatrix m)
        : out_dim_(m.rows()), in_dim_(m.cols()),
          matrix_(std::make_shared<const SparseMatrix>(std::move(m))) {
        if (!matrix_->complete()) {
            throw std::invalid_argument("LinearOperator: sparse matrix rows not finished");
        }
    }

    int out_dim() const noexcept { return out_dim_; }
    int in_dim() const noexcept { return in_dim_; }
    bool is_explicit() const noexcept { return matrix_ != nullptr; }
    const std::vector<LinearOperator>& factors() const noexcept { return factors_; }
    const SparseMatrix& matrix() const { return *matrix_; }

    std::vector<double> apply(std::span<const double> v) const {
        if (static_cast<int>(v.size()) != in_dim_) {
            throw std::invalid_argument("apply_operator: expected input length " +
                                        std::to_string(in_dim_) + ", got " +
                                        std::to_string(v.size()));
        }
        if (matrix_) {
            std::vector<double> out(static_cast<std::size_t>(out_dim_));
            matrix_->multiply(v, out);
            return out;
        }
        std::vector<double> cur(v.begin(), v.end());
        for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) {
            cur = it->apply(cur);
        }
        return cur;
    }

    /// Collapses the chain into one sparse matrix by multiplying factors
    /// left to right (cheap when the leftmost factor selects few rows).
    SparseMatrix materialize() const {
        if (matrix_) return *matrix_;
        SparseMatrix acc = factors_.front().materialize();
        for (std::size_t i = 1; i < factors_.size(); ++i) {
            acc = acc.times(factors_[i].materialize());
        }
        return acc;
    }

    static LinearOperator identity(int n) {
        SparseMatrix m(n, n);
        for (int i = 0; i < n; ++i) {
            m.push(i, 1.0);
            m.finish_row();
        }
        return LinearOperator(std::move(m));
    }

    friend LinearOperator compose(std::vector<LinearOperator> ops);

private:
    int out_dim_ = 0;
    int in_dim_ = 0;
    std::shared_ptr<const SparseMatrix> matrix_;
    std::vector<LinearOperator> factors_;
};

/// compose({A, B, C}) applies C first, then B, then A.
inline LinearOperator compose(std::vector<LinearOperator> ops) {
    if (ops.empty()) throw std::invalid_argument("compose: empty operator list");
    for (std::size_t i = 0; i + 1 < ops.size(); ++i) {
        if (ops[i].in_dim() != ops[i + 1].out_dim()) {
            throw std::invalid_argument(
                "compose: dimension chain breaks at index " + std::to_string(i) +
                " (in_dim " + std::to_string(ops[i].in_dim()) + " vs next out_dim " +
                std::to_string(ops[i + 1].out_dim()) + ")");
        }
    }
    if (ops.size() == 1) return std::move(ops.front());
    LinearOperator out;
    out.out_dim_ = ops.front().out_dim();
    out.in_dim_ = ops.back().in_dim();
    out.factors_ = std::move(ops);
    return out;
}

inline std::vector<double> apply_operator(const LinearOperator& op, std::span<const double> v) {
    return op.apply(v);
}

/// Selects the given input coordinates, in order.
inline LinearOperator selection_operator(std::span<const int> indices, int in_dim) {
    SparseMatrix m(static_cast<int>(indices.size()), in_dim);
    for (int idx : indices) {
        if (idx < 0 || idx >= in_dim) {
            throw std::out_of_range("selection index " + std::to_string(idx) +
                                    " outside [0," + std::to_string(in_dim) + ")");
        }
        m.push(idx, 1.0);
        m.finish_row();
    }
    return LinearOperator(std::move(m));
}

}  // namespace mfsr
