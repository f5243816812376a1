#pragma once

// Stride-1, zero-padded 2-D convolution kernels (im2col + GEMM).
//
// Weights are stored as a Tensor of shape {out, in, k*k} (OIHW flattened),
// biases as {out, 1, 1}. Padding is k/2 so spatial dims are preserved.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "afn/tensor.hpp"

namespace afn::kernels {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col scratch, in elements.
inline constexpr std::size_t kColBudget = std::size_t(1) << 22;

inline int kernel_size(const Shape& w) {
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(w.cols))));
  if (k * k != w.cols || k % 2 == 0) throw ShapeError("conv weight must be square with odd size");
  return k;
}

inline int band_rows(int in_channels, int k, int rows, int cols) {
  const std::size_t per_row = static_cast<std::size_t>(in_channels) * k * k * cols;
  return std::clamp<int>(static_cast<int>(kColBudget / std::max<std::size_t>(per_row, 1)), 1, rows);
}

template <typename T>
void im2col(const T* x, int channels, int rows, int cols, int k, int r0, int r1, T* col) {
  const int pad = k / 2;
  const std::size_t band = static_cast<std::size_t>(r1 - r0) * cols;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * rows * cols;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + static_cast<std::size_t>((c * k + ky) * k + kx) * band;
        const int dx = kx - pad;
        const int q0 = std::max(0, -dx);
        const int q1 = std::min(cols, cols - dx);
        for (int r = r0; r < r1; ++r, dst += cols) {
          const int sr = r + ky - pad;
          if (sr < 0 || sr >= rows) {
            std::fill(dst, dst + cols, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sr) * cols + dx;
          std::fill(dst, dst + q0, T(0));
          std::copy(src + q0, src + q1, dst + q0);
          std::fill(dst + q1, dst + cols, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int channels, int rows, int cols, int k, int r0, int r1, T* x) {
  const int pad = k / 2;
  const std::size_t band = static_cast<std::size_t>(r1 - r0) * cols;
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * rows * cols;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + static_cast<std::size_t>((c * k + ky) * k + kx) * band;
        const int dx = kx - pad;
        const int q0 = std::max(0, -dx);
        const int q1 = std::min(cols, cols - dx);
        for (int r = r0; r < r1; ++r, src += cols) {
          const int sr = r + ky - pad;
          if (sr < 0 || sr >= rows) continue;
          T* dst = plane + static_cast<std::size_t>(sr) * cols + dx;
          for (int q = q0; q < q1; ++q) dst[q] += src[q];
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, Tensor<T>& y) {
  using namespace detail;
  const int k = kernel_size(w.shape());
  const int cin = x.channels(), rows = x.rows(), cols = x.cols(), cout = w.channels();
  if (w.rows() != cin) {
    throw ShapeError("conv input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(w.rows()));
  }
  const Eigen::Index hw = static_cast<Eigen::Index>(x.shape().plane());
  y = Tensor<T>(cout, rows, cols);
  ConstMap<T> wm(w.data(), cout, cin * k * k, Eigen::OuterStride<>(cin * k * k));

  if (k == 1) {
    ConstMap<T> xm(x.data(), cin, hw, Eigen::OuterStride<>(hw));
    MutMap<T> ym(y.data(), cout, hw, Eigen::OuterStride<>(hw));
    ym.noalias() = wm * xm;
  } else {
    const int step = band_rows(cin, k, rows, cols);
    std::vector<T> col(static_cast<std::size_t>(cin) * k * k * step * cols);
    for (int r0 = 0; r0 < rows; r0 += step) {
      const int r1 = std::min(rows, r0 + step);
      const Eigen::Index band = static_cast<Eigen::Index>(r1 - r0) * cols;
      im2col(x.data(), cin, rows, cols, k, r0, r1, col.data());
      ConstMap<T> cm(col.data(), cin * k * k, band, Eigen::OuterStride<>(band));
      MutMap<T> ym(y.data() + static_cast<std::size_t>(r0) * cols, cout, band, Eigen::OuterStride<>(hw));
      ym.noalias() = wm * cm;
    }
  }
  if (bias != nullptr) {
    for (int c = 0; c < cout; ++c) {
      const T b = (*bias)[c];
      for (T& v : y.channel(c)) v += b;
    }
  }
}

// Accumulates (+=) into whichever of dx, dw, dbias are non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>* dw, Tensor<T>* dbias) {
  using namespace detail;
  const int k = kernel_size(w.shape());
  const int cin = x.channels(), rows = x.rows(), cols = x.cols(), cout = w.channels();
  const Eigen::Index hw = static_cast<Eigen::Index>(x.shape().plane());
  ConstMap<T> wm(w.data(), cout, cin * k * k, Eigen::OuterStride<>(cin * k * k));

  if (dbias != nullptr) {
    for (int c = 0; c < cout; ++c) {
      T s = 0;
      for (T v : dy.channel(c)) s += v;
      (*dbias)[c] += s;
    }
  }
  if (dx == nullptr && dw == nullptr) return;

  if (k == 1) {
    ConstMap<T> xm(x.data(), cin, hw, Eigen::OuterStride<>(hw));
    ConstMap<T> dym(dy.data(), cout, hw, Eigen::OuterStride<>(hw));
    if (dw != nullptr) {
      MutMap<T> dwm(dw->data(), cout, cin, Eigen::OuterStride<>(cin));
      dwm.noalias() += dym * xm.transpose();
    }
    if (dx != nullptr) {
      MutMap<T> dxm(dx->data(), cin, hw, Eigen::OuterStride<>(hw));
      dxm.noalias() += wm.transpose() * dym;
    }
    return;
  }

  const int step = band_rows(cin, k, rows, cols);
  std::vector<T> col(static_cast<std::size_t>(cin) * k * k * step * cols);
  for (int r0 = 0; r0 < rows; r0 += step) {
    const int r1 = std::min(rows, r0 + step);
    const Eigen::Index band = static_cast<Eigen::Index>(r1 - r0) * cols;
    ConstMap<T> dym(dy.data() + static_cast<std::size_t>(r0) * cols, cout, band, Eigen::OuterStride<>(hw));
    if (dw != nullptr) {
      im2col(x.data(), cin, rows, cols, k, r0, r1, col.data());
      ConstMap<T> cm(col.data(), cin * k * k, band, Eigen::OuterStride<>(band));
      MutMap<T> dwm(dw->data(), cout, cin * k * k, Eigen::OuterStride<>(cin * k * k));
      dwm.noalias() += dym * cm.transpose();
    }
    if (dx != nullptr) {
      MutMap<T> cm(col.data(), cin * k * k, band, Eigen::OuterStride<>(band));
      cm.noalias() = wm.transpose() * dym;
      col2im_add(col.data(), cin, rows, cols, k, r0, r1, dx->data());
    }
  }
}

}  // namespace afn::kernels
