#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include "faithmate/tensor.hpp"
#include "faithmate/toy_backend.hpp"

using namespace faithmate;

namespace {

Matrix random_matrix(size_t r, size_t c, DetRng& rng) {
    Matrix m(r, c);
    for (auto& v : m.data) v = rng.gaussian();
    return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warmup
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bit_identical(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

int main() {
    DetRng rng(42);
    int fails = 0;
    std::printf("%-12s %8s %12s %12s %10s %10s\n", "kernel", "size", "serial(ms)", "openmp(ms)",
                "speedup", "identical");

    for (size_t n : {64, 128, 256, 512}) {
        Matrix a = random_matrix(n, n, rng);
        Matrix b = random_matrix(n, n, rng);
        struct Case {
            const char* name;
            void (*serial)(const Matrix&, const Matrix&, Matrix&);
            void (*omp)(const Matrix&, const Matrix&, Matrix&);
        };
        const Case cases[] = {
            {"matmul", matmul_serial, matmul_omp},
            {"matmul_bt", matmul_bt_serial, matmul_bt_omp},
            {"matmul_at", matmul_at_serial, matmul_at_omp},
        };
        int reps = n <= 128 ? 20 : 5;
        for (const Case& c : cases) {
            Matrix out_s, out_p;
            double ts = time_ms([&] { c.serial(a, b, out_s); }, reps);
            double tp = time_ms([&] { c.omp(a, b, out_p); }, reps);
            bool same = bit_identical(out_s, out_p);
            if (!same) ++fails;
            std::printf("%-12s %8zu %12.3f %12.3f %9.2fx %10s\n", c.name, n, ts, tp, ts / tp,
                        same ? "yes" : "NO");
        }
    }
    if (fails) {
        std::printf("FAIL: %d kernel(s) diverged from the serial reference\n", fails);
        return 1;
    }
    std::printf("all kernels bit-identical to the serial reference\n");
    return 0;
}
