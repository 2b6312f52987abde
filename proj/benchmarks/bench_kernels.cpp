// Kernel throughput: OpenMP-parallel implementations vs the serial
// references kept for testing. Prints GFLOP/s per shape.

#include <chrono>
#include <cstdio>
#include <vector>

#include <omp.h>

#include "diffcore/kernels.hpp"
#include "diffcore/rng.hpp"

using diffcore::Rng;
namespace k = diffcore::kernels;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct GemmShape {
    std::size_t m, k, n;
    const char* note;
};

void bench_gemm(const GemmShape& s) {
    Rng rng(7);
    std::vector<double> a(s.m * s.k), b(s.k * s.n), c(s.m * s.n, 0.0);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : b) x = rng.uniform(-1, 1);
    const double flops = 2.0 * static_cast<double>(s.m) * s.k * s.n;
    const int reps = std::max(1, static_cast<int>(2e9 / flops));

    auto run = [&](auto&& fn) {
        std::fill(c.begin(), c.end(), 0.0);
        fn(a.data(), b.data(), c.data(), s.m, s.k, s.n);  // warm
        const double t0 = now_s();
        for (int r = 0; r < reps; ++r) fn(a.data(), b.data(), c.data(), s.m, s.k, s.n);
        return flops * reps / (now_s() - t0) / 1e9;
    };

    const double gpar = run([](auto... args) { k::gemm_acc(args...); });
    const double gser = run([](auto... args) { k::serial::gemm_acc(args...); });
    std::printf("gemm  %-28s M=%-5zu K=%-5zu N=%-6zu  parallel %7.2f GF/s   serial %7.2f GF/s   x%.2f\n",
                s.note, s.m, s.k, s.n, gpar, gser, gpar / gser);
}

void bench_conv_like() {
    // conv tower shapes as im2col GEMMs for a 48x48, 21-channel input.
    bench_gemm({8, 525, 576, "conv1 48px"});
    bench_gemm({16, 200, 144, "conv2 48px"});
    bench_gemm({256, 1152, 1, "conv6 48px"});
    // batched update shapes
    bench_gemm({8, 525, 576 * 32, "conv1 48px batch32"});
    bench_gemm({128, 576, 4 * 32, "conv5 48px batch32"});
    bench_gemm({256, 256, 256, "dense 256 batch256"});
    bench_gemm({512, 2304, 128, "flatten 192px batch128"});
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    bench_conv_like();
    return 0;
}
