#include "faithmate/tensor.hpp"

#include <cmath>

#include "faithmate/error.hpp"

namespace faithmate {

namespace {
KernelMode g_mode = KernelMode::openmp;

void check_mm(const Matrix& a, const Matrix& b, size_t ar, size_t ac, size_t br, size_t bc) {
    if (ac != br) throw contract_error("matmul: inner dimension mismatch");
    (void)a; (void)b; (void)ar; (void)bc;
}
} // namespace

KernelMode kernel_mode() {
#ifdef FAITHMATE_OPENMP
    return g_mode;
#else
    return KernelMode::serial;
#endif
}

void set_kernel_mode(KernelMode mode) { g_mode = mode; }

// Each output row is owned by one thread and the inner loops are serial, so
// the OpenMP kernels are bit-identical to the serial ones.

void matmul_serial(const Matrix& a, const Matrix& b, Matrix& out) {
    check_mm(a, b, a.rows, a.cols, b.rows, b.cols);
    out.rows = a.rows;
    out.cols = b.cols;
    out.data.assign(a.rows * b.cols, 0.0);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (size_t k = 0; k < a.cols; ++k) {
            double av = arow[k];
            const double* brow = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul_omp(const Matrix& a, const Matrix& b, Matrix& out) {
    check_mm(a, b, a.rows, a.cols, b.rows, b.cols);
    out.rows = a.rows;
    out.cols = b.cols;
    out.data.assign(a.rows * b.cols, 0.0);
    const long n = static_cast<long>(a.rows);
#ifdef FAITHMATE_OPENMP
#pragma omp parallel for schedule(static) if (a.rows * a.cols * b.cols > 16384)
#endif
    for (long i = 0; i < n; ++i) {
        const double* arow = a.row(static_cast<size_t>(i));
        double* orow = out.row(static_cast<size_t>(i));
        for (size_t k = 0; k < a.cols; ++k) {
            double av = arow[k];
            const double* brow = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    if (kernel_mode() == KernelMode::openmp) matmul_omp(a, b, out);
    else matmul_serial(a, b, out);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul(a, b, out);
    return out;
}

void matmul_bt_serial(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.cols) throw contract_error("matmul_bt: dimension mismatch");
    out.rows = a.rows;
    out.cols = b.rows;
    out.data.assign(a.rows * b.rows, 0.0);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            orow[j] = s;
        }
    }
}

void matmul_bt_omp(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.cols) throw contract_error("matmul_bt: dimension mismatch");
    out.rows = a.rows;
    out.cols = b.rows;
    out.data.assign(a.rows * b.rows, 0.0);
    const long n = static_cast<long>(a.rows);
#ifdef FAITHMATE_OPENMP
#pragma omp parallel for schedule(static) if (a.rows * a.cols * b.rows > 16384)
#endif
    for (long i = 0; i < n; ++i) {
        const double* arow = a.row(static_cast<size_t>(i));
        double* orow = out.row(static_cast<size_t>(i));
        for (size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            orow[j] = s;
        }
    }
}

void matmul_bt(const Matrix& a, const Matrix& b, Matrix& out) {
    if (kernel_mode() == KernelMode::openmp) matmul_bt_omp(a, b, out);
    else matmul_bt_serial(a, b, out);
}

void matmul_at_serial(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows != b.rows) throw contract_error("matmul_at: dimension mismatch");
    out.rows = a.cols;
    out.cols = b.cols;
    out.data.assign(a.cols * b.cols, 0.0);
    for (size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (size_t i = 0; i < a.cols; ++i) {
            double av = arow[i];
            double* orow = out.row(i);
            for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul_at_omp(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows != b.rows) throw contract_error("matmul_at: dimension mismatch");
    out.rows = a.cols;
    out.cols = b.cols;
    out.data.assign(a.cols * b.cols, 0.0);
    const long n = static_cast<long>(a.cols);
#ifdef FAITHMATE_OPENMP
#pragma omp parallel for schedule(static) if (a.rows * a.cols * b.cols > 16384)
#endif
    for (long i = 0; i < n; ++i) {
        double* orow = out.row(static_cast<size_t>(i));
        for (size_t k = 0; k < a.rows; ++k) {
            double av = a.row(k)[static_cast<size_t>(i)];
            const double* brow = b.row(k);
            for (size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul_at(const Matrix& a, const Matrix& b, Matrix& out) {
    if (kernel_mode() == KernelMode::openmp) matmul_at_omp(a, b, out);
    else matmul_at_serial(a, b, out);
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
    if (!x.same_shape(y)) throw contract_error("axpy: shape mismatch");
    for (size_t i = 0; i < x.size(); ++i) y.data[i] += alpha * x.data[i];
}

double dot(const Matrix& a, const Matrix& b) {
    if (a.size() != b.size()) throw contract_error("dot: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double l2_norm(const Matrix& m) { return std::sqrt(dot(m, m)); }

void scale(Matrix& m, double s) {
    for (auto& v : m.data) v *= s;
}

void fill(Matrix& m, double v) {
    for (auto& x : m.data) x = v;
}

} // namespace faithmate
