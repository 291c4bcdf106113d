// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "lumikit/math.hpp"

namespace lumikit {

inline constexpr double kFresnelF0 = 0.04;   // dielectric
inline constexpr double kBrdfDenomMin = 1e-6;

// Simplified Disney BRDF: Lambertian diffuse plus a GGX specular lobe with
// Schlick Fresnel and height-correlated Smith masking. `rough` follows the
// a = roughness^2 convention. When the specular lobe is disabled or either
// cosine is non-positive, only the diffuse term remains.
template <typename T>
inline Vec3<T> brdf_eval(const Vec3<T>& albedo, T rough, const Vec3<T>& n, const Vec3<T>& wi,
                         const Vec3<T>& wo, bool enable_specular = true) {
  Vec3<T> diffuse = albedo / T(M_PI);
  T mu_i = dot(wi, n), mu_o = dot(wo, n);
  if (!enable_specular || mu_i <= T(0) || mu_o <= T(0)) return diffuse;

  Vec3<T> h = normalize(wi + wo);
  T nh = dot(n, h);
  T voh = dot(wo, h);
  T a = rough * rough;
  T a2 = a * a;

  T tt = nh * nh * (a2 - 1) + 1;
  T D = a2 / (T(M_PI) * tt * tt);
  T F = T(kFresnelF0) + (1 - T(kFresnelF0)) * std::pow(1 - std::clamp(voh, T(0), T(1)), T(5));
  auto lambda = [a2](T mu) {
    return (std::sqrt(1 + a2 * (1 - mu * mu) / (mu * mu)) - 1) / 2;
  };
  T G = 1 / (1 + lambda(mu_i) + lambda(mu_o));
  T denom = std::max(4 * mu_i * mu_o, T(kBrdfDenomMin));
  T spec = D * F * G / denom;
  return diffuse + Vec3<T>{spec, spec, spec};
}

template <typename T>
struct BrdfGrads {
  Vec3<T> d_albedo{};
  T d_rough = 0;
  Vec3<T> d_n{}, d_wi{}, d_wo{};
};

// Hand-derived adjoint of brdf_eval, accumulated into `g`.
template <typename T>
inline void brdf_eval_backward(const Vec3<T>& albedo, T rough, const Vec3<T>& n,
                               const Vec3<T>& wi, const Vec3<T>& wo, bool enable_specular,
                               const Vec3<T>& d_out, BrdfGrads<T>& g) {
  (void)albedo;
  g.d_albedo += d_out / T(M_PI);
  T mu_i = dot(wi, n), mu_o = dot(wo, n);
  if (!enable_specular || mu_i <= T(0) || mu_o <= T(0)) return;

  Vec3<T> hsum = wi + wo;
  Vec3<T> h = normalize(hsum);
  T nh = dot(n, h);
  T voh = dot(wo, h);
  T a = rough * rough;
  T a2 = a * a;

  T tt = nh * nh * (a2 - 1) + 1;
  T D = a2 / (T(M_PI) * tt * tt);
  T voh_c = std::clamp(voh, T(0), T(1));
  T F = T(kFresnelF0) + (1 - T(kFresnelF0)) * std::pow(1 - voh_c, T(5));
  auto lambda = [a2](T mu) {
    return (std::sqrt(1 + a2 * (1 - mu * mu) / (mu * mu)) - 1) / 2;
  };
  T li = lambda(mu_i), lo = lambda(mu_o);
  T m = 1 + li + lo;
  T G = 1 / m;
  T denom_raw = 4 * mu_i * mu_o;
  bool denom_clamped = denom_raw < T(kBrdfDenomMin);
  T denom = denom_clamped ? T(kBrdfDenomMin) : denom_raw;
  T spec = D * F * G / denom;

  T d_spec = d_out.x + d_out.y + d_out.z;
  T d_D = d_spec * F * G / denom;
  T d_F = d_spec * D * G / denom;
  T d_G = d_spec * D * F / denom;
  T d_denom = denom_clamped ? T(0) : -d_spec * spec / denom;

  // D = a2 / (pi tt^2)
  T d_a2 = d_D * (tt - 2 * a2 * nh * nh) / (T(M_PI) * tt * tt * tt);
  T d_nh = d_D * (-4 * a2 * nh * (a2 - 1)) / (T(M_PI) * tt * tt * tt);

  // F = F0 + (1-F0)(1-voh)^5
  T d_voh = (voh > T(0) && voh < T(1))
                ? d_F * (-(1 - T(kFresnelF0)) * 5 * std::pow(1 - voh_c, T(4)))
                : T(0);

  // G = 1/(1 + li + lo); lambda(mu) = (sqrt(1 + a2 (1-mu^2)/mu^2) - 1)/2
  T d_li = -d_G * G * G;
  T d_lo = d_li;
  auto lambda_grads = [a2](T mu, T d_l, T& d_mu_out, T& d_a2_out) {
    T r = a2 * (1 - mu * mu) / (mu * mu);
    T root = std::sqrt(1 + r);
    T d_r = d_l / (4 * root);
    d_mu_out = d_r * a2 * (-2 / (mu * mu * mu));
    d_a2_out = d_r * (1 / (mu * mu) - 1);
  };
  T d_mu_i = 0, d_mu_o = 0, d_a2_li = 0, d_a2_lo = 0;
  lambda_grads(mu_i, d_li, d_mu_i, d_a2_li);
  lambda_grads(mu_o, d_lo, d_mu_o, d_a2_lo);
  d_a2 += d_a2_li + d_a2_lo;

  // denom = 4 mu_i mu_o
  d_mu_i += d_denom * 4 * mu_o;
  d_mu_o += d_denom * 4 * mu_i;

  // a2 = rough^4
  g.d_rough += d_a2 * 4 * rough * rough * rough;

  // dot products
  g.d_n += h * d_nh + wi * d_mu_i + wo * d_mu_o;
  Vec3<T> d_h = n * d_nh + wo * d_voh;
  g.d_wi += n * d_mu_i;
  g.d_wo += n * d_mu_o + h * d_voh;

  // h = normalize(wi + wo)
  Vec3<T> d_hsum = normalize_backward(hsum, d_h);
  g.d_wi += d_hsum;
  g.d_wo += d_hsum;
}

}  // namespace lumikit
