// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lumikit/image.hpp"

namespace lumikit {

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1, computed per channel over zero-padded same-size
// convolutions and averaged over pixels and channels.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

template <typename T>
inline std::vector<T> ssim_kernel() {
  std::vector<T> k(kSsimWindow);
  T sum = 0;
  int half = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    T d = T(i - half);
    k[i] = std::exp(-d * d / (2 * T(kSsimSigma) * T(kSsimSigma)));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable zero-padded same-size Gaussian blur of one channel plane.
template <typename T>
inline void gauss_blur(const std::vector<T>& src, int w, int h, std::vector<T>& dst,
                       std::vector<T>& scratch) {
  const std::vector<T> kernel = ssim_kernel<T>();
  int half = kSsimWindow / 2;
  scratch.resize(src.size());
  dst.resize(src.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = 0;
      for (int k = 0; k < kSsimWindow; ++k) {
        int xx = x + k - half;
        if (xx >= 0 && xx < w) acc += kernel[k] * src[static_cast<size_t>(y) * w + xx];
      }
      scratch[static_cast<size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = 0;
      for (int k = 0; k < kSsimWindow; ++k) {
        int yy = y + k - half;
        if (yy >= 0 && yy < h) acc += kernel[k] * scratch[static_cast<size_t>(yy) * w + x];
      }
      dst[static_cast<size_t>(y) * w + x] = acc;
    }
}

template <typename T>
struct SsimPlanes {
  std::vector<T> mx, my, sxx, syy, sxy;  // means and (co)variances
};

template <typename T>
inline void ssim_planes(const std::vector<T>& x, const std::vector<T>& y, int w, int h,
                        SsimPlanes<T>& p) {
  size_t n = x.size();
  std::vector<T> tmp(n), scratch;
  gauss_blur(x, w, h, p.mx, scratch);
  gauss_blur(y, w, h, p.my, scratch);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] * x[i];
  gauss_blur(tmp, w, h, p.sxx, scratch);
  for (size_t i = 0; i < n; ++i) tmp[i] = y[i] * y[i];
  gauss_blur(tmp, w, h, p.syy, scratch);
  for (size_t i = 0; i < n; ++i) tmp[i] = x[i] * y[i];
  gauss_blur(tmp, w, h, p.sxy, scratch);
  for (size_t i = 0; i < n; ++i) {
    p.sxx[i] -= p.mx[i] * p.mx[i];
    p.syy[i] -= p.my[i] * p.my[i];
    p.sxy[i] -= p.mx[i] * p.my[i];
  }
}

}  // namespace detail

// Mean SSIM over pixels and channels.
template <typename T>
inline T ssim(const ImageBuffer<T>& a, const ImageBuffer<T>& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument("ssim: image dimensions differ");
  int w = a.width, h = a.height;
  size_t plane_n = static_cast<size_t>(w) * h;
  T total = 0;
  std::vector<T> xc(plane_n), yc(plane_n);
  detail::SsimPlanes<T> p;
  for (int ch = 0; ch < a.channels; ++ch) {
    for (size_t i = 0; i < plane_n; ++i) {
      xc[i] = a.data[i * a.channels + ch];
      yc[i] = b.data[i * b.channels + ch];
    }
    detail::ssim_planes(xc, yc, w, h, p);
    for (size_t i = 0; i < plane_n; ++i) {
      T a1 = 2 * p.mx[i] * p.my[i] + T(kSsimC1);
      T a2 = 2 * p.sxy[i] + T(kSsimC2);
      T b1 = p.mx[i] * p.mx[i] + p.my[i] * p.my[i] + T(kSsimC1);
      T b2 = p.sxx[i] + p.syy[i] + T(kSsimC2);
      total += (a1 * a2) / (b1 * b2);
    }
  }
  return total / (T(plane_n) * a.channels);
}

// Accumulates d(mean SSIM)/d(a) scaled by `d_upstream` into d_a.
template <typename T>
inline void ssim_backward(const ImageBuffer<T>& a, const ImageBuffer<T>& b, T d_upstream,
                          ImageBuffer<T>& d_a) {
  int w = a.width, h = a.height;
  size_t plane_n = static_cast<size_t>(w) * h;
  T norm = d_upstream / (T(plane_n) * a.channels);
  std::vector<T> xc(plane_n), yc(plane_n);
  std::vector<T> g_mx(plane_n), g_sxx(plane_n), g_sxy(plane_n);
  std::vector<T> conv1, conv2, conv3, scratch;
  detail::SsimPlanes<T> p;
  for (int ch = 0; ch < a.channels; ++ch) {
    for (size_t i = 0; i < plane_n; ++i) {
      xc[i] = a.data[i * a.channels + ch];
      yc[i] = b.data[i * b.channels + ch];
    }
    detail::ssim_planes(xc, yc, w, h, p);
    for (size_t i = 0; i < plane_n; ++i) {
      T a1 = 2 * p.mx[i] * p.my[i] + T(kSsimC1);
      T a2 = 2 * p.sxy[i] + T(kSsimC2);
      T b1 = p.mx[i] * p.mx[i] + p.my[i] * p.my[i] + T(kSsimC1);
      T b2 = p.sxx[i] + p.syy[i] + T(kSsimC2);
      T inv = 1 / (b1 * b2);
      T s = a1 * a2 * inv;
      T gS = norm;
      T gA1 = gS * a2 * inv;
      T gA2 = gS * a1 * inv;
      T gB1 = -gS * s / b1;
      T gB2 = -gS * s / b2;
      // local (pre-convolution) adjoints of the plane values
      g_mx[i] = gA1 * 2 * p.my[i] + gB1 * 2 * p.mx[i] - gB2 * 2 * p.mx[i] - gA2 * 2 * p.my[i];
      g_sxx[i] = gB2;
      g_sxy[i] = gA2 * 2;
    }
    // mx = C[x]; sxx = C[x^2] - mx^2; sxy = C[xy] - mx my.
    // The -mx^2 and -mx my corrections were already folded into g_mx above
    // (the gB2 * -2mx and gA2 * -my terms), so what remains is the adjoint of
    // the three convolutions; the Gaussian window is symmetric and the
    // padding is zero, so the transpose is the same blur.
    detail::gauss_blur(g_mx, w, h, conv1, scratch);
    detail::gauss_blur(g_sxx, w, h, conv2, scratch);
    detail::gauss_blur(g_sxy, w, h, conv3, scratch);
    for (size_t i = 0; i < plane_n; ++i) {
      T g = conv1[i] + 2 * xc[i] * conv2[i] + yc[i] * conv3[i];
      d_a.data[i * d_a.channels + ch] += g;
    }
  }
}

}  // namespace lumikit
