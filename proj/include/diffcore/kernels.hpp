#pragma once

#include <cstddef>

namespace diffcore::kernels {

// Dense kernels shared by every learned block. The parallel versions split
// work so that each output element is produced by exactly one thread with a
// fixed inner accumulation order (ascending k), which makes results bitwise
// independent of the thread count. The serial namespace keeps the naive
// reference implementations used by the unit tests and the kernel benchmark.

// C[M,N] += A[M,K] * B[K,N], all row-major.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// C[M,N] += A^T[K,M] * B[K,N]; A stored row-major [K,M].
void gemm_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// C[M,N] += A[M,K] * B^T[N,K]; B stored row-major [N,K].
void gemm_bt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// y[M] += A[M,N] * x[N]
void gemv_acc(const double* a, const double* x, double* y, std::size_t m, std::size_t n);

// im2col for a single image: input [C,H,W], output cols [C*kh*kw, OH*OW].
void im2col(const double* img, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, double* cols);

// Scatter-add of cols back into the image gradient (inverse of im2col).
void col2im_acc(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t pad, double* img);

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

namespace serial {
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_bt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
}  // namespace serial

}  // namespace diffcore::kernels
