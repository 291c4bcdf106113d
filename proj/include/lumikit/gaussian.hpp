// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "lumikit/math.hpp"

namespace lumikit {

// One flat-disk primitive in canonical (undeformed) state.
template <typename T>
struct Gaussian2D {
  Vec3<T> mu;            // center, world units
  Quat<T> rot;           // unit; frame columns are (tu, tv, n)
  T su = T(0.1), sv = T(0.1);
  T opacity = T(0.5);
  Vec3<T> color{T(0.5), T(0.5), T(0.5)};   // canonical view-independent color
  Vec3<T> albedo{T(0.5), T(0.5), T(0.5)};  // diffuse albedo (stage 2)
  T rough = T(0.7);                        // microfacet roughness (stage 2)
  T gate_logit = T(0.01);                  // dynamic-assignment variable P
};

// Per-parameter gradient slot matching Gaussian2D.
template <typename T>
struct GaussianGrad {
  Vec3<T> mu{};
  Quat<T> rot{0, 0, 0, 0};
  T su = 0, sv = 0;
  T opacity = 0;
  Vec3<T> color{};
  Vec3<T> albedo{};
  T rough = 0;
  T gate_logit = 0;

  void add(const GaussianGrad& o) {
    mu += o.mu;
    rot.w += o.rot.w;
    rot.x += o.rot.x;
    rot.y += o.rot.y;
    rot.z += o.rot.z;
    su += o.su;
    sv += o.sv;
    opacity += o.opacity;
    color += o.color;
    albedo += o.albedo;
    rough += o.rough;
    gate_logit += o.gate_logit;
  }
};

// The geometry and attributes actually rendered for one frame: canonical
// state with the gated deformation already applied. Structure-of-arrays so
// rasterization and tracing stay cache-friendly.
template <typename T>
struct SplatScene {
  std::vector<Vec3<T>> mu;
  std::vector<Quat<T>> rot;
  std::vector<Frame<T>> frame;  // derived from rot
  std::vector<T> su, sv, opacity;
  std::vector<Vec3<T>> color;        // time-modulated color (stage-1 render)
  std::vector<Vec3<T>> albedo;
  std::vector<T> rough;
  std::vector<Vec3<T>> canon_color;  // canonical color (indirect tracing)

  size_t size() const { return mu.size(); }

  void resize(size_t n) {
    mu.resize(n);
    rot.resize(n);
    frame.resize(n);
    su.resize(n);
    sv.resize(n);
    opacity.resize(n);
    color.resize(n);
    albedo.resize(n);
    rough.resize(n);
    canon_color.resize(n);
  }
};

// Builds a render scene directly from canonical gaussians (no deformation).
template <typename T>
inline SplatScene<T> scene_from_canonical(const std::vector<Gaussian2D<T>>& gs) {
  SplatScene<T> s;
  s.resize(gs.size());
  for (size_t i = 0; i < gs.size(); ++i) {
    s.mu[i] = gs[i].mu;
    s.rot[i] = gs[i].rot;
    s.frame[i] = quat_to_frame(gs[i].rot);
    s.su[i] = gs[i].su;
    s.sv[i] = gs[i].sv;
    s.opacity[i] = gs[i].opacity;
    s.color[i] = gs[i].color;
    s.albedo[i] = gs[i].albedo;
    s.rough[i] = gs[i].rough;
    s.canon_color[i] = gs[i].color;
  }
  return s;
}

// Gradients w.r.t. the rendered (deformed) scene; the deformation backward
// maps mu/rot/color entries onto canonical parameters and the MLP.
template <typename T>
struct SplatSceneGrads {
  std::vector<Vec3<T>> mu;
  std::vector<Quat<T>> rot;
  std::vector<T> su, sv, opacity;
  std::vector<Vec3<T>> color;
  std::vector<Vec3<T>> albedo;
  std::vector<T> rough;
  std::vector<Vec3<T>> canon_color;

  void resize_zero(size_t n) {
    mu.assign(n, Vec3<T>{});
    rot.assign(n, Quat<T>{0, 0, 0, 0});
    su.assign(n, T(0));
    sv.assign(n, T(0));
    opacity.assign(n, T(0));
    color.assign(n, Vec3<T>{});
    albedo.assign(n, Vec3<T>{});
    rough.assign(n, T(0));
    canon_color.assign(n, Vec3<T>{});
  }

  void add(const SplatSceneGrads& o) {
    for (size_t i = 0; i < mu.size(); ++i) {
      mu[i] += o.mu[i];
      rot[i].w += o.rot[i].w;
      rot[i].x += o.rot[i].x;
      rot[i].y += o.rot[i].y;
      rot[i].z += o.rot[i].z;
      su[i] += o.su[i];
      sv[i] += o.sv[i];
      opacity[i] += o.opacity[i];
      color[i] += o.color[i];
      albedo[i] += o.albedo[i];
      rough[i] += o.rough[i];
      canon_color[i] += o.canon_color[i];
    }
  }
};

}  // namespace lumikit
