// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0
//
// The 5-gaussian, 8x8 micro scene used by the gradient suite. Built so the
// documented non-smooth points (alpha clamp, sort ties, coverage-threshold
// crossings, |P| ~ 0) stay far from the finite-difference step.

#pragma once

#include <gtest/gtest.h>

#include "lumikit/dataset.hpp"
#include "lumikit/model.hpp"
#include "lumikit/trainer.hpp"

namespace lumikit::oracles {

template <typename T>
struct MicroSetup {
  Model<T> model;
  Dataset<T> data;
  TrainConfig<T> cfg;
};

template <typename T>
inline MicroSetup<T> make_micro_setup(uint64_t seed = 0) {
  MicroSetup<T> s;
  Rng rng(seed ^ 0xabcdef);

  // five large overlapping splats at well-separated depths
  const T depths[5] = {T(-0.25), T(-0.1), T(0.08), T(0.22), T(0.4)};
  s.model.gaussians.resize(5);
  for (int i = 0; i < 5; ++i) {
    Gaussian2D<T>& g = s.model.gaussians[i];
    g.mu = {T(rng.uniform(-0.25, 0.25)), T(rng.uniform(-0.25, 0.25)), depths[i]};
    Quat<T> tilt{1, T(rng.uniform(-0.15, 0.15)), T(rng.uniform(-0.15, 0.15)),
                 T(rng.uniform(-0.15, 0.15))};
    g.rot = tilt.normalized();
    g.su = T(rng.uniform(0.6, 0.9));
    g.sv = T(rng.uniform(0.6, 0.9));
    g.opacity = T(rng.uniform(0.55, 0.8));
    g.color = {T(rng.uniform(0.3, 0.7)), T(rng.uniform(0.3, 0.7)), T(rng.uniform(0.3, 0.7))};
    g.albedo = {T(rng.uniform(0.3, 0.7)), T(rng.uniform(0.3, 0.7)), T(rng.uniform(0.3, 0.7))};
    g.rough = T(rng.uniform(0.35, 0.8));
    g.gate_logit = T(rng.uniform(0.2, 0.7));
  }
  s.model.dynamic_label.assign(5, 0);
  s.model.scene_extent = T(1);
  s.model.mlp.init(2, 16, 4, 6, seed + 1);
  // small random heads so deformation paths carry signal
  Rng wrng(seed ^ 0x17);
  for (auto* head : {&s.model.mlp.head_mu, &s.model.mlp.head_rot, &s.model.mlp.head_color}) {
    for (auto& w : head->w) w = T(wrng.uniform(-0.05, 0.05));
    for (auto& b : head->b) b = T(wrng.uniform(-0.02, 0.02));
  }

  s.model.env = EnvironmentMap<T>(8, 4);
  for (auto& t : s.model.env.texels)
    t = {T(wrng.uniform(0.2, 1.0)), T(wrng.uniform(0.2, 1.0)), T(wrng.uniform(0.2, 1.0))};

  // two frames with distinct timesteps
  for (int f = 0; f < 2; ++f) {
    T t = f == 0 ? T(0) : T(0.7);
    Camera<T> cam = look_at_camera<T>({T(0.15), T(-0.1), T(-2.2)}, {0, 0, 0}, {0, 1, 0}, T(55), 8,
                                      8, t);
    s.data.cameras.push_back(cam);
    ImageBuffer<T> gt(8, 8, 3);
    for (auto& v : gt.data) v = T(rng.uniform(0.05, 0.95));
    s.data.frames.push_back(gt);
    std::vector<uint8_t> mask(64);
    for (auto& m : mask) m = rng.next_below(2) ? 1 : 0;
    s.data.masks.push_back(mask);
  }

  s.cfg.seed = seed;
  s.cfg.render = RenderSettings<T>::exact();
  s.cfg.shade = ShadeOptions<T>::exact();
  s.cfg.shade.trace_eps = T(1e-3);
  s.cfg.stage1.deform_warmup_iter = 0;
  s.cfg.stage1.separation_start_iter = 0;
  s.cfg.stage2.pixel_samples = 12;
  s.cfg.stage2.n_rays = 16;
  s.cfg.mlp_depth = 2;
  s.cfg.mlp_width = 16;
  s.cfg.enc_time = 4;
  s.cfg.enc_mu = 6;
  s.cfg.env_width = 8;
  s.cfg.env_height = 4;
  return s;
}

// Central finite difference of a scalar functional of the model.
template <typename T, typename F>
inline T central_difference(Model<T>& model, T* param, F&& eval, T h) {
  T saved = *param;
  *param = saved + h;
  T up = eval();
  *param = saved - h;
  T down = eval();
  *param = saved;
  return (up - down) / (2 * h);
}

// Relative error with a unit floor so that near-zero gradients are compared
// absolutely. A parameter whose FD estimates at h and h/2 disagree has a
// non-smooth point inside the step interval (an L1 or |z_i - z_j| kink, an
// alpha clamp, a coverage-threshold crossing); such points are excluded from
// the strict comparison but still held to a loose sanity bound against the
// better h/2 estimate.
struct GradCheckStats {
  double max_err = 0;
  int checked = 0;
  int excluded = 0;
  std::string worst;

  static double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

  void update(double analytic, double fd_h, double fd_h2, const std::string& what) {
    if (rel(fd_h, fd_h2) > 1e-4) {
      ++excluded;
      EXPECT_LT(rel(analytic, fd_h2), 1e-2) << "non-smooth exclusion sanity: " << what;
      return;
    }
    ++checked;
    double err = rel(analytic, fd_h);
    if (err > max_err) {
      max_err = err;
      worst = what;
    }
  }
};

}  // namespace lumikit::oracles
