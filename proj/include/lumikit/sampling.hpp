// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lumikit/math.hpp"
#include "lumikit/rng.hpp"

namespace lumikit {

// One uniform-hemisphere sample around a normal; the local coordinates are
// kept so the direction can be differentiated w.r.t. the normal.
template <typename T>
struct HemisphereSample {
  Vec3<T> dir;       // world space, dir . n >= 0
  T lx, ly, lz;      // coordinates in the (b1, b2, n) basis
};

// Jittered sqrt(N) x sqrt(N) grid over (cos(theta), phi), mapped by the
// uniform-hemisphere transform theta = acos(1 - u); pdf = 1/(2 pi). A
// non-square count is rounded down to the nearest square.
template <typename T>
inline std::vector<HemisphereSample<T>> stratified_hemisphere(const Vec3<T>& n, int n_rays,
                                                              Rng& rng) {
  if (n_rays < 1) throw std::invalid_argument("stratified_hemisphere: sample count must be >= 1");
  int grid = static_cast<int>(std::sqrt(static_cast<double>(n_rays)));
  while ((grid + 1) * (grid + 1) <= n_rays) ++grid;  // guard fp sqrt rounding

  Vec3<T> b1, b2;
  basis_from_normal(n, b1, b2);

  std::vector<HemisphereSample<T>> samples;
  samples.reserve(static_cast<size_t>(grid) * grid);
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      T u1 = (T(i) + T(rng.next_double())) / grid;
      T u2 = (T(j) + T(rng.next_double())) / grid;
      T cosT = 1 - u1;
      T sinT = std::sqrt(std::max(T(0), 1 - cosT * cosT));
      T phi = T(2 * M_PI) * u2;
      T lx = sinT * std::cos(phi), ly = sinT * std::sin(phi), lz = cosT;
      samples.push_back({b1 * lx + b2 * ly + n * lz, lx, ly, lz});
    }
  return samples;
}

inline constexpr double kUniformHemispherePdf = 1.0 / (2.0 * M_PI);

// Accumulates d(n) for one sample direction adjoint. The strata jitter is
// parameter-independent, so only the frame rotation depends on the normal.
template <typename T>
inline Vec3<T> hemisphere_dir_backward(const Vec3<T>& n, const HemisphereSample<T>& s,
                                       const Vec3<T>& d_dir) {
  Vec3<T> d_b1 = d_dir * s.lx;
  Vec3<T> d_b2 = d_dir * s.ly;
  Vec3<T> d_n = d_dir * s.lz;
  d_n += basis_from_normal_backward(n, d_b1, d_b2);
  return d_n;
}

}  // namespace lumikit
