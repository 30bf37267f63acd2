#pragma once

#include <span>
#include <vector>

namespace cfglab {

/// Dense row-major matrix of 64-bit floats.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
    bool all_finite() const;
};

/// C = A · Bᵀ (A: n×k, B: m×k → n×m). Accumulation over k in ascending order.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// C = A · B (A: n×k, B: k×m → n×m). Accumulation over k in ascending order.
Matrix matmul_nn(const Matrix& a, const Matrix& b);

/// C = Aᵀ · B (A: k×n, B: k×m → n×m). Accumulation over k in ascending order.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace cfglab
