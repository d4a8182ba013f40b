#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace faithmate {

// Dense row-major matrix of doubles. Vectors are 1 x n.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
    double* row(size_t r) { return data.data() + r * cols; }
    const double* row(size_t r) const { return data.data() + r * cols; }
    size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

using ParamMap = std::map<std::string, Matrix>;

// Kernel selection. The serial kernels are the reference implementation; the
// OpenMP kernels parallelize over output rows and must produce bit-identical
// results (each output element is computed by exactly one thread with a
// serial inner loop).
enum class KernelMode { serial, openmp };

KernelMode kernel_mode();
void set_kernel_mode(KernelMode mode);

// out = a * b
void matmul_serial(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_omp(const Matrix& a, const Matrix& b, Matrix& out);
void matmul(const Matrix& a, const Matrix& b, Matrix& out); // dispatches on kernel_mode()
Matrix matmul(const Matrix& a, const Matrix& b);

// out = a * b^T
void matmul_bt_serial(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_bt_omp(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_bt(const Matrix& a, const Matrix& b, Matrix& out);

// out = a^T * b
void matmul_at_serial(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at_omp(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at(const Matrix& a, const Matrix& b, Matrix& out);

// y += alpha * x
void axpy(double alpha, const Matrix& x, Matrix& y);

double dot(const Matrix& a, const Matrix& b);
double l2_norm(const Matrix& m);
void scale(Matrix& m, double s);
void fill(Matrix& m, double v);

} // namespace faithmate
