#include "cfglab/matrix.hpp"

#include <cmath>
#include <string>

#include "cfglab/errors.hpp"

namespace cfglab {

bool Matrix::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols) + ")");
    }
}

// All three products run an i-k-j style kernel: the innermost loop walks
// contiguous rows of both operands and each C[i,j] accumulates its k-terms in
// ascending order, so results are reproducible and the loops vectorize.

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul_nn: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows) + ")");
    }
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + static_cast<std::size_t>(i) * a.cols;
        double* crow = c.data.data() + static_cast<std::size_t>(i) * c.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) {
        throw ShapeError("matmul_nt: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                         std::to_string(b.cols) + ")");
    }
    // Transposing b up front keeps the hot loop contiguous; the copy is
    // negligible next to the multiply itself.
    return matmul_nn(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) {
        throw ShapeError("matmul_tn: outer dimensions differ (" + std::to_string(a.rows) + " vs " +
                         std::to_string(b.rows) + ")");
    }
    Matrix c(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.data.data() + static_cast<std::size_t>(k) * a.cols;
        const double* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            double* crow = c.data.data() + static_cast<std::size_t>(i) * c.cols;
            for (int j = 0; j < b.cols; ++j) {
                crow[j] += aki * brow[j];
            }
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

}  // namespace cfglab
