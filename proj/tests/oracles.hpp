// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference computations, kept independent of the library's
// estimator paths.

#pragma once

#include <cmath>
#include <functional>

#include "lumikit/brdf.hpp"
#include "lumikit/envmap.hpp"
#include "lumikit/math.hpp"

namespace lumikit::oracles {

// Dense hemisphere quadrature of f(w) cos(theta) dw in the local frame of n.
// Default grid 64 x 256 over (theta, phi).
template <typename T, typename F>
T hemisphere_quadrature(const Vec3<T>& n, F&& integrand, int n_theta = 64, int n_phi = 256) {
  Vec3<T> b1, b2;
  basis_from_normal(n, b1, b2);
  T sum = 0;
  T d_theta = T(M_PI / 2) / n_theta;
  T d_phi = T(2 * M_PI) / n_phi;
  for (int i = 0; i < n_theta; ++i) {
    T theta = (T(i) + T(0.5)) * d_theta;
    T st = std::sin(theta), ct = std::cos(theta);
    for (int j = 0; j < n_phi; ++j) {
      T phi = (T(j) + T(0.5)) * d_phi;
      Vec3<T> w = b1 * (st * std::cos(phi)) + b2 * (st * std::sin(phi)) + n * ct;
      sum += integrand(w, ct) * st * d_theta * d_phi;
    }
  }
  return sum;
}

// Reference value of the shading integral for an unoccluded point:
// int f_r(w, wo) L_env(w) (w.n) dw over the upper hemisphere.
template <typename T>
Vec3<T> shade_quadrature_oracle(const Vec3<T>& albedo, T rough, const Vec3<T>& n,
                                const Vec3<T>& wo, const EnvironmentMap<T>& env,
                                bool enable_specular, int n_theta = 64, int n_phi = 256) {
  Vec3<T> result{};
  for (int ch = 0; ch < 3; ++ch) {
    result[ch] = hemisphere_quadrature<T>(
        n,
        [&](const Vec3<T>& w, T cos_t) {
          Vec3<T> f = brdf_eval(albedo, rough, n, w, wo, enable_specular);
          return f[ch] * env.lookup(w)[ch] * cos_t;
        },
        n_theta, n_phi);
  }
  return result;
}

}  // namespace lumikit::oracles
