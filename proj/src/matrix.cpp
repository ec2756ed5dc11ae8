#include "uqbench/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace uqbench {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> init) {
    Matrix m;
    m.rows = init.size();
    m.cols = init.size() ? init.begin()->size() : 0;
    m.data.reserve(m.rows * m.cols);
    for (const auto& r : init) {
        if (r.size() != m.cols) throw std::invalid_argument("Matrix::from_rows: ragged rows");
        m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
}

std::vector<double> Matrix::row(std::size_t r) const {
    return std::vector<double>(row_ptr(r), row_ptr(r) + cols);
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix out(a.rows, b.cols);
    // i-k-j order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row_ptr(i);
        double* oi = out.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) oi[j] += aik * bk[j];
        }
    }
    return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_at_b: row mismatch");
    Matrix out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* ak = a.row_ptr(k);
        const double* bk = b.row_ptr(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = ak[i];
            double* oi = out.row_ptr(i);
            for (std::size_t j = 0; j < b.cols; ++j) oi[j] += aki * bk[j];
        }
    }
    return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_a_bt: col mismatch");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row_ptr(i);
        double* oi = out.row_ptr(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* bj = b.row_ptr(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            oi[j] = s;
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

}  // namespace uqbench
