// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "lumikit/deform.hpp"
#include "lumikit/rasterize.hpp"

using namespace lumikit;

namespace {

DeformationMlp<double> random_mlp(int depth, int width, uint64_t seed, double head_scale) {
  DeformationMlp<double> mlp;
  mlp.init(depth, width, 4, 6, seed);
  Rng rng(seed, 777);
  auto scatter = [&](Dense<double>& l, double s) {
    for (auto& v : l.w) v = rng.uniform(-s, s);
    for (auto& v : l.b) v = rng.uniform(-s, s);
  };
  scatter(mlp.head_mu, head_scale);
  scatter(mlp.head_rot, head_scale);
  scatter(mlp.head_color, head_scale);
  return mlp;
}

std::vector<Gaussian2D<double>> random_gaussians(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<Gaussian2D<double>> gs(n);
  for (auto& g : gs) {
    g.mu = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    Quat<double> q{1, rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
    g.rot = q.normalized();
    g.su = rng.uniform(0.1, 0.4);
    g.sv = rng.uniform(0.1, 0.4);
    g.opacity = rng.uniform(0.2, 0.8);
    g.color = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    g.albedo = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    g.rough = rng.uniform(0.2, 0.9);
    g.gate_logit = rng.uniform(0.1, 0.6);
  }
  return gs;
}

}  // namespace

TEST(Mlp, ZeroHeadsGiveZeroDeltas) {
  DeformationMlp<double> mlp;
  mlp.init(3, 32, 6, 10, 1);
  std::vector<Vec3<double>> mu = {{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.9}};
  std::vector<Vec3<double>> dmu, drot, dcol;
  mlp_forward_batch<double>(mlp, 0.37, mu, dmu, drot, dcol, nullptr);
  for (size_t i = 0; i < mu.size(); ++i) {
    EXPECT_EQ(length(dmu[i]), 0.0);
    EXPECT_EQ(length(drot[i]), 0.0);
    EXPECT_EQ(length(dcol[i]), 0.0);
  }
}

// Derived oracle: straightforward scalar loop re-implementation.
TEST(Mlp, MatchesScalarReference) {
  auto mlp = random_mlp(3, 16, 5, 0.3);
  Vec3<double> mu{0.25, -0.4, 0.6};
  double t = 0.7;
  std::vector<Vec3<double>> dmu, drot, dcol;
  std::vector<Vec3<double>> mus = {mu};
  mlp_forward_batch<double>(mlp, t, mus, dmu, drot, dcol, nullptr);

  // Reference: hand-rolled loop over the same weights.
  std::vector<double> x(mlp.input_dim());
  positional_encode(&t, 1, mlp.enc_t, x.data());
  positional_encode(&mu.x, 3, mlp.enc_mu, x.data() + 2 * mlp.enc_t);
  std::vector<double> cur = x;
  for (const auto& layer : mlp.trunk) {
    std::vector<double> next(layer.out, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double acc = layer.b[o];
      for (int i = 0; i < layer.in; ++i) acc += layer.w[o * layer.in + i] * cur[i];
      next[o] = std::max(acc, 0.0);
    }
    cur = next;
  }
  auto head = [&](const Dense<double>& h) {
    Vec3<double> out;
    for (int o = 0; o < 3; ++o) {
      double acc = h.b[o];
      for (int i = 0; i < h.in; ++i) acc += h.w[o * h.in + i] * cur[i];
      out[o] = acc;
    }
    return out;
  };
  EXPECT_LT(length(dmu[0] - head(mlp.head_mu)), 1e-9);
  EXPECT_LT(length(drot[0] - head(mlp.head_rot)), 1e-9);
  EXPECT_LT(length(dcol[0] - head(mlp.head_color)), 1e-9);
}

TEST(Mlp, DeterministicForward) {
  auto mlp = random_mlp(4, 24, 9, 0.2);
  std::vector<Vec3<double>> mu = {{0.3, 0.1, -0.2}};
  std::vector<Vec3<double>> a1, a2, b1, b2, c1, c2;
  mlp_forward_batch<double>(mlp, 0.25, mu, a1, b1, c1, nullptr);
  mlp_forward_batch<double>(mlp, 0.25, mu, a2, b2, c2, nullptr);
  EXPECT_EQ(a1[0].x, a2[0].x);
  EXPECT_EQ(b1[0].y, b2[0].y);
  EXPECT_EQ(c1[0].z, c2[0].z);
}

TEST(Mlp, BackwardMatchesFiniteDifference) {
  auto mlp = random_mlp(2, 12, 13, 0.4);
  std::vector<Vec3<double>> mu = {{0.2, -0.3, 0.5}, {0.6, 0.1, -0.4}};
  double t = 0.4;
  Rng arng(4);
  std::vector<Vec3<double>> d_dmu(2), d_drot(2), d_dcol(2);
  for (int i = 0; i < 2; ++i) {
    d_dmu[i] = {arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0)};
    d_drot[i] = {arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0)};
    d_dcol[i] = {arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0)};
  }
  auto objective = [&](const DeformationMlp<double>& m, const std::vector<Vec3<double>>& mus) {
    std::vector<Vec3<double>> a, b, c;
    mlp_forward_batch<double>(m, t, mus, a, b, c, nullptr);
    double s = 0;
    for (int i = 0; i < 2; ++i) s += dot(d_dmu[i], a[i]) + dot(d_drot[i], b[i]) + dot(d_dcol[i], c[i]);
    return s;
  };

  MlpActivations<double> ctx;
  std::vector<Vec3<double>> a, b, c;
  mlp_forward_batch<double>(mlp, t, mu, a, b, c, &ctx);
  auto grads = mlp.grad_shape();
  std::vector<Vec3<double>> d_mu(2, Vec3<double>{});
  mlp_backward_batch(mlp, ctx, d_dmu, d_drot, d_dcol, mu, MlpGradMask{}, grads, &d_mu);

  double h = 1e-6;
  // every trunk weight of layer 0, a sample of layer 1, plus all head weights
  for (size_t k = 0; k < mlp.trunk[0].w.size(); k += 7) {
    auto mp = mlp, mm = mlp;
    mp.trunk[0].w[k] += h;
    mm.trunk[0].w[k] -= h;
    double fd = (objective(mp, mu) - objective(mm, mu)) / (2 * h);
    EXPECT_NEAR(grads.trunk[0].w[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
  for (size_t k = 0; k < mlp.head_mu.w.size(); k += 3) {
    auto mp = mlp, mm = mlp;
    mp.head_mu.w[k] += h;
    mm.head_mu.w[k] -= h;
    double fd = (objective(mp, mu) - objective(mm, mu)) / (2 * h);
    EXPECT_NEAR(grads.head_mu.w[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
  for (size_t k = 0; k < mlp.trunk[1].b.size(); k += 2) {
    auto mp = mlp, mm = mlp;
    mp.trunk[1].b[k] += h;
    mm.trunk[1].b[k] -= h;
    double fd = (objective(mp, mu) - objective(mm, mu)) / (2 * h);
    EXPECT_NEAR(grads.trunk[1].b[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
  // input positions (the encoding path)
  for (int g = 0; g < 2; ++g)
    for (int cidx = 0; cidx < 3; ++cidx) {
      auto mup = mu, mum = mu;
      mup[g][cidx] += h;
      mum[g][cidx] -= h;
      double fd = (objective(mlp, mup) - objective(mlp, mum)) / (2 * h);
      EXPECT_NEAR(d_mu[g][cidx], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Concrete, LogOddsCancel) {
  EXPECT_DOUBLE_EQ(concrete_sample(1.0, 0.5, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(concrete_sample(-1.0, 0.5, 0.5), 0.5);
}

TEST(Concrete, VanishingLogitClosesGate) {
  EXPECT_LT(concrete_sample(1e-12, 0.5, 0.5), 1e-10);
}

// Derived: direct formula evaluation at |P| = e^2, T = 0.5.
TEST(Concrete, FormulaValue) {
  double p = std::exp(2.0);
  double expect = 1.0 / (1.0 + std::exp(-4.0));
  EXPECT_NEAR(concrete_sample(p, 0.5, 0.5), expect, 1e-12);
  EXPECT_NEAR(expect, 0.9820, 1e-4);
}

TEST(Concrete, InferenceEqualsSigmoidIdentity) {
  for (double p : {0.01, 0.3, 1.0, 2.5, 40.0}) {
    double expect = sigmoid(std::log(p) / 0.5);
    EXPECT_DOUBLE_EQ(gate_inference(p, 0.5), expect);
  }
}

TEST(Concrete, MonotoneInMagnitude) {
  for (double u : {0.2, 0.5, 0.8}) {
    double prev = -1;
    for (double p = 0.01; p < 20; p *= 1.7) {
      double v = concrete_sample(p, 0.5, u);
      EXPECT_GT(v, prev);
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      prev = v;
    }
  }
}

TEST(Concrete, GradMatchesFiniteDifference) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    double p = rng.uniform(-2.0, 2.0);
    if (std::abs(p) < 1e-3) continue;
    double u = rng.next_open();
    double temp = rng.uniform(0.2, 1.5);
    double h = 1e-7;
    double fd = (concrete_sample(p + h, temp, u) - concrete_sample(p - h, temp, u)) / (2 * h);
    EXPECT_NEAR(concrete_sample_grad(p, temp, u), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(ApplyDeformation, GateZeroIsIdentity) {
  auto gs = random_gaussians(3, 2);
  DeformationMlp<double> mlp = random_mlp(2, 8, 3, 0.5);
  // drive the gate shut: tiny logits make P_tilde ~ 1e-16
  for (auto& g : gs) g.gate_logit = 1e-9;
  DeformSettings<double> s;
  s.time = 0.6;
  s.gate_mode = GateMode::kInference;
  auto scene = build_deformed_scene<double>(gs, mlp, s, nullptr, nullptr);
  for (size_t i = 0; i < gs.size(); ++i) {
    EXPECT_LT(length(scene.mu[i] - gs[i].mu), 1e-12);
    EXPECT_NEAR(scene.rot[i].w, gs[i].rot.w, 1e-12);
  }
}

TEST(ApplyDeformation, FullAndHalfGate) {
  Gaussian2D<double> g;
  g.mu = {1, 2, 3};
  g.rot = Quat<double>{1, 0, 0, 0};
  // hand-apply: gate 1 with delta (0,0,1)
  Vec3<double> mu_full = g.mu + Vec3<double>{0, 0, 1} * 1.0;
  EXPECT_LT(length(mu_full - Vec3<double>{1, 2, 4}), 1e-15);
  Vec3<double> mu_half = g.mu + Vec3<double>{2, 0, 0} * 0.5;
  EXPECT_LT(length(mu_half - Vec3<double>{2, 2, 3}), 1e-15);
}

TEST(ApplyDeformation, NeverTouchesOpacityOrScale) {
  auto gs = random_gaussians(8, 4);
  auto mlp = random_mlp(3, 16, 8, 1.5);
  DeformSettings<double> s;
  s.time = 0.9;
  s.gate_mode = GateMode::kDisabled;  // fully open: maximal deformation
  auto scene = build_deformed_scene<double>(gs, mlp, s, nullptr, nullptr);
  for (size_t i = 0; i < gs.size(); ++i) {
    EXPECT_EQ(scene.su[i], gs[i].su);
    EXPECT_EQ(scene.sv[i], gs[i].sv);
    EXPECT_EQ(scene.opacity[i], gs[i].opacity);
  }
}

TEST(ModulateColor, Cases) {
  Vec3<double> c{0.8, 0.8, 0.8};
  EXPECT_LT(length(clamp01(c * (Vec3<double>{1, 1, 1} - Vec3<double>{0, 0, 0})) - c), 1e-15);
  Vec3<double> half = clamp01(c * (Vec3<double>{1, 1, 1} - Vec3<double>{0.5, 0.5, 0.5}));
  EXPECT_LT(length(half - Vec3<double>{0.4, 0.4, 0.4}), 1e-15);
  Vec3<double> shadowed = clamp01(c * (Vec3<double>{1, 1, 1} - Vec3<double>{1, 1, 1}));
  EXPECT_EQ(length(shadowed), 0.0);
}

// Closed gates with a zeroed color head reproduce the canonical render at any
// timestep.
TEST(Deform, ClosedGateRendersCanonical) {
  auto gs = random_gaussians(10, 7);
  for (auto& g : gs) g.gate_logit = 1e-9;
  auto mlp = random_mlp(3, 16, 15, 0.8);
  mlp.head_color.zero();

  Camera<double> cam = look_at_camera<double>({0, 0, -2.5}, {0, 0, 0}, {0, 1, 0}, 55, 16, 16);
  auto canonical = render_scene(scene_from_canonical(gs), cam, {});
  for (double t : {0.0, 0.33, 1.0}) {
    DeformSettings<double> s;
    s.time = t;
    s.gate_mode = GateMode::kInference;
    auto scene = build_deformed_scene<double>(gs, mlp, s, nullptr, nullptr);
    auto res = render_scene(scene, cam, {});
    for (size_t i = 0; i < res.color.data.size(); ++i)
      EXPECT_NEAR(res.color.data[i], canonical.color.data[i], 1e-9);
  }
}

// End-to-end check of deform_backward against finite differences through the
// deformed-scene arrays.
TEST(DeformBackward, MatchesFiniteDifference) {
  auto gs = random_gaussians(3, 9);
  auto mlp = random_mlp(2, 10, 19, 0.5);
  DeformSettings<double> s;
  s.time = 0.45;
  s.gate_mode = GateMode::kStochastic;

  // Fixed random adjoints over the deformed scene.
  Rng arng(12);
  auto rv = [&]() {
    return Vec3<double>{arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0)};
  };
  size_t n = gs.size();
  SplatSceneGrads<double> sg;
  sg.resize_zero(n);
  std::vector<Vec3<double>> d_delta_mu(n), d_delta_col(n);
  for (size_t i = 0; i < n; ++i) {
    sg.mu[i] = rv();
    sg.rot[i] = {arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0),
                 arng.uniform(-1.0, 1.0)};
    sg.su[i] = arng.uniform(-1.0, 1.0);
    sg.sv[i] = arng.uniform(-1.0, 1.0);
    sg.opacity[i] = arng.uniform(-1.0, 1.0);
    sg.color[i] = rv();
    sg.albedo[i] = rv();
    sg.rough[i] = arng.uniform(-1.0, 1.0);
    sg.canon_color[i] = rv();
    d_delta_mu[i] = rv();
    d_delta_col[i] = rv();
  }

  // Same gate draws for every evaluation.
  auto objective = [&](const std::vector<Gaussian2D<double>>& gset,
                       const DeformationMlp<double>& m) {
    Rng gate_rng(1234);
    DeformContext<double> ctx;
    auto scene = build_deformed_scene(gset, m, s, &gate_rng, &ctx);
    double total = 0;
    for (size_t i = 0; i < n; ++i) {
      total += dot(sg.mu[i], scene.mu[i]);
      for (int k = 0; k < 4; ++k) total += sg.rot[i][k] * scene.rot[i][k];
      total += sg.su[i] * scene.su[i] + sg.sv[i] * scene.sv[i] + sg.opacity[i] * scene.opacity[i];
      total += dot(sg.color[i], scene.color[i]) + dot(sg.albedo[i], scene.albedo[i]);
      total += sg.rough[i] * scene.rough[i];
      total += dot(sg.canon_color[i], scene.canon_color[i]);
      total += dot(d_delta_mu[i], ctx.delta_mu[i]);
      total += dot(d_delta_col[i], ctx.delta_color[i]);
    }
    return total;
  };

  Rng gate_rng(1234);
  DeformContext<double> ctx;
  build_deformed_scene(gs, mlp, s, &gate_rng, &ctx);
  std::vector<GaussianGrad<double>> ggrads(n);
  auto mlp_grads = mlp.grad_shape();
  deform_backward(gs, mlp, ctx, sg, &d_delta_mu, &d_delta_col, DeformGradMask{}, ggrads,
                  mlp_grads);

  double h = 1e-6;
  auto check = [&](double analytic, auto&& mutate, const char* what) {
    auto gp = gs, gm = gs;
    mutate(gp, +h);
    mutate(gm, -h);
    double fd = (objective(gp, mlp) - objective(gm, mlp)) / (2 * h);
    EXPECT_NEAR(analytic, fd, 2e-4 * std::max(1.0, std::abs(fd))) << what;
  };
  for (size_t gi = 0; gi < n; ++gi) {
    for (int c = 0; c < 3; ++c)
      check(ggrads[gi].mu[c], [&, c](auto& g, double d) { g[gi].mu[c] += d; }, "mu");
    for (int c = 0; c < 4; ++c)
      check(ggrads[gi].rot[c], [&, c](auto& g, double d) { g[gi].rot[c] += d; }, "rot");
    check(ggrads[gi].su, [&](auto& g, double d) { g[gi].su += d; }, "su");
    check(ggrads[gi].opacity, [&](auto& g, double d) { g[gi].opacity += d; }, "opacity");
    for (int c = 0; c < 3; ++c)
      check(ggrads[gi].color[c], [&, c](auto& g, double d) { g[gi].color[c] += d; }, "color");
    for (int c = 0; c < 3; ++c)
      check(ggrads[gi].albedo[c], [&, c](auto& g, double d) { g[gi].albedo[c] += d; }, "albedo");
    check(ggrads[gi].rough, [&](auto& g, double d) { g[gi].rough += d; }, "rough");
    check(ggrads[gi].gate_logit, [&](auto& g, double d) { g[gi].gate_logit += d; }, "gate");
  }
  // a sample of MLP weights through the full chain
  for (size_t k = 0; k < mlp.trunk[0].w.size(); k += 29) {
    auto mp = mlp, mm = mlp;
    mp.trunk[0].w[k] += h;
    mm.trunk[0].w[k] -= h;
    double fd = (objective(gs, mp) - objective(gs, mm)) / (2 * h);
    EXPECT_NEAR(mlp_grads.trunk[0].w[k], fd, 2e-4 * std::max(1.0, std::abs(fd)));
  }
  for (size_t k = 0; k < mlp.head_rot.w.size(); k += 5) {
    auto mp = mlp, mm = mlp;
    mp.head_rot.w[k] += h;
    mm.head_rot.w[k] -= h;
    double fd = (objective(gs, mp) - objective(gs, mm)) / (2 * h);
    EXPECT_NEAR(mlp_grads.head_rot.w[k], fd, 2e-4 * std::max(1.0, std::abs(fd)));
  }
}
