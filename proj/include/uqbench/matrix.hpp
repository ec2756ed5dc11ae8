#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace uqbench {

/// Dense row-major matrix of doubles, the numeric carrier for the whole toolkit.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // length rows * cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> init);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row_ptr(std::size_t r) { return data.data() + r * cols; }
    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }

    std::vector<double> row(std::size_t r) const;

    bool all_finite() const;
};

/// A (r1 x c) times B (c x c2); throws std::invalid_argument on inner mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

/// A^T * B without materializing the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

/// A * B^T without materializing the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

}  // namespace uqbench
