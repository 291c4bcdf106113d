// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>

#include "lumikit/camera.hpp"
#include "lumikit/gaussian.hpp"
#include "lumikit/math.hpp"

namespace lumikit {

// Result of intersecting a ray with the plane of one splat. (u, v) are local
// coordinates in units of the splat scales; gauss_weight = exp(-(u^2+v^2)/2).
template <typename T>
struct SplatIntersection {
  T tstar;       // ray parameter of the plane hit
  T u, v;        // scaled local coordinates
  T gauss_weight;
  Vec3<T> p;     // world-space hit point
};

inline constexpr double kParallelEps = 1e-9;

// Plane hit in the splat's tangent frame. Misses when the ray is parallel to
// the plane or the hit lies behind the ray origin.
template <typename T>
inline std::optional<SplatIntersection<T>> ray_splat_intersect(const Ray<T>& ray,
                                                               const Vec3<T>& mu,
                                                               const Frame<T>& frame, T su, T sv) {
  T denom = dot(ray.dir, frame.n);
  if (std::abs(denom) < T(kParallelEps)) return std::nullopt;
  T tstar = dot(mu - ray.origin, frame.n) / denom;
  if (tstar <= T(0)) return std::nullopt;
  Vec3<T> p = ray.origin + ray.dir * tstar;
  Vec3<T> rel = p - mu;
  T u = dot(rel, frame.tu) / su;
  T v = dot(rel, frame.tv) / sv;
  T r2 = u * u + v * v;
  return SplatIntersection<T>{tstar, u, v, std::exp(-r2 / 2), p};
}

// Adjoint accumulator for one intersection. Callers fill the d_* inputs and
// read the accumulated parameter adjoints afterward.
template <typename T>
struct SplatIntersectGrads {
  Vec3<T> d_mu{};
  Vec3<T> d_tu{}, d_tv{}, d_n{};
  T d_su = 0, d_sv = 0;
  Vec3<T> d_origin{}, d_dir{};
};

// Backward of ray_splat_intersect. d_u, d_v, d_tstar, d_p are adjoints of the
// forward outputs (the gauss_weight chain is handled by the caller via d_u,
// d_v since it also owns the alpha clamp).
template <typename T>
inline void ray_splat_intersect_backward(const Ray<T>& ray, const Vec3<T>& mu,
                                         const Frame<T>& frame, T su, T sv,
                                         const SplatIntersection<T>& hit, T d_u, T d_v, T d_tstar,
                                         Vec3<T> d_p, SplatIntersectGrads<T>& g) {
  Vec3<T> rel = hit.p - mu;

  // u = dot(rel, tu)/su, v = dot(rel, tv)/sv
  Vec3<T> d_rel = frame.tu * (d_u / su) + frame.tv * (d_v / sv);
  g.d_tu += rel * (d_u / su);
  g.d_tv += rel * (d_v / sv);
  g.d_su += d_u * (-hit.u / su);
  g.d_sv += d_v * (-hit.v / sv);

  // rel = p - mu
  d_p += d_rel;
  g.d_mu -= d_rel;

  // p = origin + tstar * dir
  d_tstar += dot(d_p, ray.dir);
  g.d_origin += d_p;
  g.d_dir += d_p * hit.tstar;

  // tstar = A / B, A = dot(mu - origin, n), B = dot(dir, n)
  T denom = dot(ray.dir, frame.n);
  T g_A = d_tstar / denom;
  T g_B = -d_tstar * hit.tstar / denom;
  g.d_mu += frame.n * g_A;
  g.d_n += (mu - ray.origin) * g_A;
  g.d_origin -= frame.n * g_A;
  g.d_dir += frame.n * g_B;
  g.d_n += ray.dir * g_B;
}

// World-space AABB covering the splat out to `sigmas` standard deviations.
template <typename T>
struct Aabb {
  Vec3<T> lo{T(1e30), T(1e30), T(1e30)};
  Vec3<T> hi{T(-1e30), T(-1e30), T(-1e30)};

  void expand(const Aabb& o) {
    lo = vmin(lo, o.lo);
    hi = vmax(hi, o.hi);
  }

  bool hit_by(const Ray<T>& ray, const Vec3<T>& inv_dir, T tmax) const {
    T t0 = 0, t1 = tmax;
    for (int a = 0; a < 3; ++a) {
      T ta = (lo[a] - ray.origin[a]) * inv_dir[a];
      T tb = (hi[a] - ray.origin[a]) * inv_dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }
};

template <typename T>
inline Aabb<T> splat_aabb(const Vec3<T>& mu, const Frame<T>& frame, T su, T sv, T sigmas) {
  Vec3<T> e{std::abs(frame.tu.x) * su + std::abs(frame.tv.x) * sv,
            std::abs(frame.tu.y) * su + std::abs(frame.tv.y) * sv,
            std::abs(frame.tu.z) * su + std::abs(frame.tv.z) * sv};
  e *= sigmas;
  return {mu - e, mu + e};
}

}  // namespace lumikit
