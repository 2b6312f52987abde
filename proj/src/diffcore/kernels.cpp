#include "diffcore/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "common/errors.hpp"

namespace diffcore::kernels {

namespace {
constexpr std::size_t kMR = 4;
constexpr std::size_t kNR = 16;
}  // namespace

// Register-blocked kernel; each C tile is owned by one thread and its k loop
// runs in a fixed order, so results do not depend on the thread count.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t mt = m / kMR * kMR;
    const std::size_t nt = n / kNR * kNR;
#pragma omp parallel for schedule(static)
    for (std::size_t i0 = 0; i0 < mt; i0 += kMR) {
        for (std::size_t j0 = 0; j0 < nt; j0 += kNR) {
            double acc[kMR][kNR] = {};
            const double* a0 = a + i0 * k;
            const double* a1 = a0 + k;
            const double* a2 = a1 + k;
            const double* a3 = a2 + k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double* brow = b + kk * n + j0;
                const double av0 = a0[kk], av1 = a1[kk], av2 = a2[kk], av3 = a3[kk];
                for (std::size_t j = 0; j < kNR; ++j) {
                    const double bv = brow[j];
                    acc[0][j] += av0 * bv;
                    acc[1][j] += av1 * bv;
                    acc[2][j] += av2 * bv;
                    acc[3][j] += av3 * bv;
                }
            }
            for (std::size_t i = 0; i < kMR; ++i) {
                double* crow = c + (i0 + i) * n + j0;
                for (std::size_t j = 0; j < kNR; ++j) crow[j] += acc[i][j];
            }
        }
        // N tail for these rows.
        for (std::size_t j = nt; j < n; ++j) {
            for (std::size_t i = i0; i < i0 + kMR; ++i) {
                double s = 0.0;
                const double* arow = a + i * k;
                for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * b[kk * n + j];
                c[i * n + j] += s;
            }
        }
    }
    // M tail.
    for (std::size_t i = mt; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    // C[m,n] += sum_k A[k,m] * B[k,n]. Parallel over rows of C; k ascending.
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a[kk * m + i];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_bt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    // C[m,n] += dot(A[m,:], B[n,:]). Both rows contiguous in k.
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            crow[j] += s;
        }
    }
}

void gemv_acc(const double* a, const double* x, double* y, std::size_t m, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += arow[j] * x[j];
        y[i] += s;
    }
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    const std::size_t padded = in + 2 * pad;
    if (k > padded) {
        throw common::ShapeError("conv kernel size " + std::to_string(k) + " exceeds padded input " +
                                 std::to_string(padded));
    }
    return (padded - k) / stride + 1;
}

void im2col(const double* img, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, double* cols) {
    const std::size_t oh = conv_out_dim(h, kh, stride, pad);
    const std::size_t ow = conv_out_dim(w, kw, stride, pad);
    const std::size_t patch = oh * ow;
#pragma omp parallel for schedule(static)
    for (std::size_t row = 0; row < c * kh * kw; ++row) {
        const std::size_t ci = row / (kh * kw);
        const std::size_t ki = (row / kw) % kh;
        const std::size_t kj = row % kw;
        double* out = cols + row * patch;
        const double* plane = img + ci * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                std::memset(out + oy * ow, 0, ow * sizeof(double));
                continue;
            }
            const double* src = plane + static_cast<std::size_t>(iy) * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                out[oy * ow + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[ix];
            }
        }
    }
}

void col2im_acc(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t pad, double* img) {
    const std::size_t oh = conv_out_dim(h, kh, stride, pad);
    const std::size_t ow = conv_out_dim(w, kw, stride, pad);
    const std::size_t patch = oh * ow;
    // Scatter-add; kept serial, callers parallelize across samples.
    for (std::size_t row = 0; row < c * kh * kw; ++row) {
        const std::size_t ci = row / (kh * kw);
        const std::size_t ki = (row / kw) % kh;
        const std::size_t kj = row % kw;
        const double* src = cols + row * patch;
        double* plane = img + ci * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            double* dst = plane + static_cast<std::size_t>(iy) * w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                dst[ix] += src[oy * ow + ox];
            }
        }
    }
}

namespace serial {

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
            c[i * n + j] += s;
        }
    }
}

void gemm_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += a[kk * m + i] * b[kk * n + j];
            c[i * n + j] += s;
        }
    }
}

void gemm_bt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
            c[i * n + j] += s;
        }
    }
}

}  // namespace serial

}  // namespace diffcore::kernels
