// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "lumikit/deform.hpp"
#include "lumikit/envmap.hpp"
#include "lumikit/gaussian.hpp"
#include "lumikit/mlp.hpp"

namespace lumikit {

// Everything learned by the pipeline.
template <typename T>
struct Model {
  std::vector<Gaussian2D<T>> gaussians;
  DeformationMlp<T> mlp;
  EnvironmentMap<T> env;
  std::vector<uint8_t> dynamic_label;  // per-gaussian, evaluation only
  T scene_extent = 1;
  T gate_temperature = T(0.5);
};

template <typename T>
struct ModelGrads {
  std::vector<GaussianGrad<T>> gaussians;
  DeformationMlp<T> mlp;
  std::vector<Vec3<T>> env;

  void init_from(const Model<T>& model) {
    gaussians.assign(model.gaussians.size(), GaussianGrad<T>{});
    mlp = model.mlp.grad_shape();
    env.assign(model.env.size(), Vec3<T>{});
  }

  void zero() {
    std::fill(gaussians.begin(), gaussians.end(), GaussianGrad<T>{});
    mlp.for_each_layer([](Dense<T>& l) { l.zero(); });
    std::fill(env.begin(), env.end(), Vec3<T>{});
  }
};

// Splats seeded on known surface points (the stand-in for SfM input); one
// splat per point, disk in the local tangent plane.
template <typename T>
inline void init_gaussians_from_points(const std::vector<Vec3<T>>& points,
                                       const std::vector<Vec3<T>>& normals,
                                       const std::vector<uint8_t>& dynamic, T scale,
                                       Model<T>& model) {
  size_t n = points.size();
  model.gaussians.resize(n);
  model.dynamic_label.assign(dynamic.begin(), dynamic.end());
  Vec3<T> lo{T(1e30), T(1e30), T(1e30)}, hi = -lo;
  for (size_t i = 0; i < n; ++i) {
    Gaussian2D<T>& g = model.gaussians[i];
    g.mu = points[i];
    Vec3<T> b1, b2;
    basis_from_normal(normals[i], b1, b2);
    g.rot = frame_to_quat(Frame<T>{b1, b2, normals[i]});
    g.su = g.sv = scale;
    g.opacity = T(0.5);
    g.color = {T(0.5), T(0.5), T(0.5)};
    g.albedo = g.color;
    g.rough = T(0.7);
    g.gate_logit = T(0.01);
    lo = vmin(lo, points[i]);
    hi = vmax(hi, points[i]);
  }
  model.scene_extent = n > 0 ? length(hi - lo) : T(1);
}

}  // namespace lumikit
