#include <cstring>

#include "doctest.h"
#include "faithmate/tensor.hpp"
#include "faithmate/toy_backend.hpp"

using namespace faithmate;

namespace {

Matrix rand_mat(size_t r, size_t c, DetRng& rng) {
    Matrix m(r, c);
    for (auto& v : m.data) v = rng.gaussian();
    return m;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("openmp kernels are bit-identical to the serial reference") {
    DetRng rng(7);
    // Non-square shapes on purpose; includes sizes above the parallel cutoff.
    const size_t shapes[][3] = {{3, 5, 4}, {17, 9, 33}, {64, 64, 64}, {130, 70, 90}};
    for (auto [m, k, n] : shapes) {
        Matrix a = rand_mat(m, k, rng);
        Matrix b = rand_mat(k, n, rng);
        Matrix bt = rand_mat(n, k, rng);
        Matrix at = rand_mat(k, m, rng);

        Matrix s, p;
        matmul_serial(a, b, s);
        matmul_omp(a, b, p);
        CHECK(bit_equal(s, p));

        matmul_bt_serial(a, bt, s);
        matmul_bt_omp(a, bt, p);
        CHECK(bit_equal(s, p));

        matmul_at_serial(at, b, s);
        matmul_at_omp(at, b, p);
        CHECK(bit_equal(s, p));
    }
}

TEST_CASE("matmul matches a hand-computed product") {
    Matrix a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    Matrix b(3, 2);
    b.data = {7, 8, 9, 10, 11, 12};
    Matrix out;
    matmul(a, b, out);
    CHECK(out.rows == 2);
    CHECK(out.cols == 2);
    CHECK(out.at(0, 0) == 58);
    CHECK(out.at(0, 1) == 64);
    CHECK(out.at(1, 0) == 139);
    CHECK(out.at(1, 1) == 154);
}

TEST_CASE("transpose variants agree with explicit transposition") {
    DetRng rng(11);
    Matrix a = rand_mat(4, 6, rng);
    Matrix b = rand_mat(5, 6, rng);

    Matrix bt(6, 5);
    for (size_t i = 0; i < 5; ++i)
        for (size_t j = 0; j < 6; ++j) bt.at(j, i) = b.at(i, j);

    Matrix via_bt, direct;
    matmul_bt(a, b, via_bt);
    matmul(a, bt, direct);
    for (size_t i = 0; i < direct.size(); ++i)
        CHECK(via_bt.data[i] == doctest::Approx(direct.data[i]).epsilon(1e-12));

    Matrix c = rand_mat(6, 4, rng);
    Matrix d = rand_mat(6, 5, rng);
    Matrix ct(4, 6);
    for (size_t i = 0; i < 6; ++i)
        for (size_t j = 0; j < 4; ++j) ct.at(j, i) = c.at(i, j);
    Matrix via_at, direct2;
    matmul_at(c, d, via_at);
    matmul(ct, d, direct2);
    for (size_t i = 0; i < direct2.size(); ++i)
        CHECK(via_at.data[i] == doctest::Approx(direct2.data[i]).epsilon(1e-12));
}

TEST_CASE("vector helpers") {
    Matrix x(1, 3);
    x.data = {1, 2, 3};
    Matrix y(1, 3);
    y.data = {4, 5, 6};

    axpy(2.0, x, y);
    CHECK(y.data[0] == 6);
    CHECK(y.data[1] == 9);
    CHECK(y.data[2] == 12);

    CHECK(dot(x, x) == doctest::Approx(14.0));
    CHECK(l2_norm(x) == doctest::Approx(std::sqrt(14.0)));

    scale(x, 0.5);
    CHECK(x.data[2] == doctest::Approx(1.5));
    fill(x, -1.0);
    CHECK(x.data[0] == -1.0);
}

TEST_CASE("kernel mode dispatch is switchable") {
    KernelMode before = kernel_mode();
    set_kernel_mode(KernelMode::serial);
    CHECK(kernel_mode() == KernelMode::serial);
    set_kernel_mode(before);
}
