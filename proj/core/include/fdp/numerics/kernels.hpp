#pragma once

#include <cstddef>

// Raw single-threaded kernels on row-major buffers. Every output element is
// accumulated in a fixed order, so results are bit-reproducible.
namespace fdp::num::kernels {

// C[M x N] += A[M x K] * B[K x N]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

// C[M x N] += A^T * B with A stored K x M.
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

// C[M x N] += A * B^T with B stored N x K.
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <class T>
T dot(const T* a, const T* b, std::size_t n);

struct ConvGeometry {
  std::size_t channels, height, width;  // input to the (forward) convolution
  std::size_t kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;
};

// col[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s - p + i][ox*s - p + j] (0 outside)
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col);

// Adjoint of im2col: scatters-adds col back into x.
template <class T>
void col2im(const T* col, const ConvGeometry& g, T* x);

}  // namespace fdp::num::kernels
