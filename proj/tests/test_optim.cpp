// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "lumikit/checkpoint.hpp"
#include "lumikit/trainer.hpp"
#include "micro_scene.hpp"

using namespace lumikit;

TEST(Adam, FreshZeroGradientLeavesParamsUnchanged) {
  std::vector<double> params = {1.0, -2.0};
  std::vector<double> grads = {0.0, 0.0};
  ParamGroup<double> g;
  g.name = "test";
  g.lr = 0.1;
  g.count = [&]() { return params.size(); };
  g.get = [&](size_t i) { return params[i]; };
  g.set = [&](size_t i, double v) { params[i] = v; };
  g.grad = [&](size_t i) { return grads[i]; };
  g.step();
  EXPECT_EQ(params[0], 1.0);
  EXPECT_EQ(params[1], -2.0);
}

TEST(Adam, FirstStepIsLearningRate) {
  std::vector<double> params = {0.0};
  std::vector<double> grads = {1.0};
  ParamGroup<double> g;
  g.name = "test";
  g.lr = 0.01;
  g.count = [&]() { return params.size(); };
  g.get = [&](size_t i) { return params[i]; };
  g.set = [&](size_t i, double v) { params[i] = v; };
  g.grad = [&](size_t i) { return grads[i]; };
  g.step();
  EXPECT_NEAR(params[0], -0.01, 1e-9);
}

// Derived oracle: explicit scalar Adam recurrence written out longhand.
TEST(Adam, MatchesScalarReference) {
  Rng rng(3);
  std::vector<double> params = {0.4};
  double g_seq[20];
  for (auto& g : g_seq) g = rng.uniform(-2.0, 2.0);

  ParamGroup<double> group;
  group.name = "test";
  group.lr = 0.05;
  double current_grad = 0;
  group.count = [&]() { return params.size(); };
  group.get = [&](size_t i) { return params[i]; };
  group.set = [&](size_t i, double v) { params[i] = v; };
  group.grad = [&](size_t) { return current_grad; };

  double ref = 0.4, m = 0, v = 0;
  for (int t = 1; t <= 20; ++t) {
    current_grad = g_seq[t - 1];
    group.step();
    m = 0.9 * m + 0.1 * current_grad;
    v = 0.999 * v + 0.001 * current_grad * current_grad;
    double mhat = m / (1 - std::pow(0.9, t));
    double vhat = v / (1 - std::pow(0.999, t));
    ref -= 0.05 * mhat / (std::sqrt(vhat) + 1e-15);
    ASSERT_NEAR(params[0], ref, 1e-7);
  }
}

TEST(Adam, FrozenGroupRefusesStep) {
  ParamGroup<double> g;
  g.name = "frozen";
  g.frozen = true;
  EXPECT_THROW(g.step(), std::logic_error);
}

TEST(Adam, ClampAppliedAfterStep) {
  std::vector<double> params = {0.999};
  std::vector<double> grads = {-5.0};
  ParamGroup<double> g;
  g.name = "test";
  g.lr = 0.5;
  g.count = [&]() { return params.size(); };
  g.get = [&](size_t i) { return params[i]; };
  g.set = [&](size_t i, double v) { params[i] = v; };
  g.grad = [&](size_t i) { return grads[i]; };
  g.clamp = [&]() { params[0] = std::clamp(params[0], 0.0, 1.0); };
  g.step();
  EXPECT_LE(params[0], 1.0);
}

TEST(Stage1Graph, ReuseThrows) {
  auto s = oracles::make_micro_setup<double>(1);
  Stage1Graph<double> graph(s.model, s.data, 1, 10, s.cfg);
  ModelGrads<double> grads;
  grads.init_from(s.model);
  graph.backward(grads);
  EXPECT_THROW(graph.backward(grads), std::logic_error);
}

TEST(Stage1Graph, DeterministicBackward) {
  auto s = oracles::make_micro_setup<double>(2);
  ModelGrads<double> a, b;
  a.init_from(s.model);
  b.init_from(s.model);
  {
    Stage1Graph<double> graph(s.model, s.data, 1, 7, s.cfg);
    graph.backward(a);
  }
  {
    Stage1Graph<double> graph(s.model, s.data, 1, 7, s.cfg);
    graph.backward(b);
  }
  for (size_t i = 0; i < a.gaussians.size(); ++i) {
    EXPECT_EQ(a.gaussians[i].mu.x, b.gaussians[i].mu.x);
    EXPECT_EQ(a.gaussians[i].opacity, b.gaussians[i].opacity);
    EXPECT_EQ(a.gaussians[i].gate_logit, b.gaussians[i].gate_logit);
  }
}

// End-to-end stage-1 gradients against central finite differences. This is
// the unit-sized version of the acceptance gradient suite.
TEST(Stage1Graph, FullGradientCheck) {
  auto s = oracles::make_micro_setup<double>(3);
  const int frame = 1, iter = 5;

  ModelGrads<double> grads;
  grads.init_from(s.model);
  {
    Stage1Graph<double> graph(s.model, s.data, frame, iter, s.cfg);
    graph.backward(grads);
  }
  auto eval = [&]() {
    return Stage1Graph<double>(s.model, s.data, frame, iter, s.cfg).total();
  };
  const double h = 1e-4;
  oracles::GradCheckStats stats;

  for (size_t gi = 0; gi < s.model.gaussians.size(); ++gi) {
    auto& g = s.model.gaussians[gi];
    auto& gg = grads.gaussians[gi];
    double* params[] = {&g.mu.x,    &g.mu.y,    &g.mu.z,    &g.rot.w,    &g.rot.x,
                        &g.rot.y,   &g.rot.z,   &g.su,      &g.sv,       &g.opacity,
                        &g.color.x, &g.color.y, &g.color.z, &g.gate_logit};
    double analytic[] = {gg.mu.x,    gg.mu.y,    gg.mu.z,    gg.rot.w,    gg.rot.x,
                         gg.rot.y,   gg.rot.z,   gg.su,      gg.sv,       gg.opacity,
                         gg.color.x, gg.color.y, gg.color.z, gg.gate_logit};
    for (int k = 0; k < 14; ++k) {
      double fd = oracles::central_difference<double>(s.model, params[k], eval, h);
      double fd2 = oracles::central_difference<double>(s.model, params[k], eval, h / 2);
      stats.update(analytic[k], fd, fd2,
                   "gaussian " + std::to_string(gi) + " p" + std::to_string(k));
    }
  }
  // all MLP weights of the trunk layer 0 and the heads, every 5th elsewhere
  auto check_layer = [&](Dense<double>& layer, Dense<double>& glayer, size_t stride,
                         const std::string& name) {
    for (size_t k = 0; k < layer.w.size(); k += stride) {
      double fd = oracles::central_difference<double>(s.model, &layer.w[k], eval, h);
      double fd2 = oracles::central_difference<double>(s.model, &layer.w[k], eval, h / 2);
      stats.update(glayer.w[k], fd, fd2, name + ".w" + std::to_string(k));
    }
    for (size_t k = 0; k < layer.b.size(); k += stride) {
      double fd = oracles::central_difference<double>(s.model, &layer.b[k], eval, h);
      double fd2 = oracles::central_difference<double>(s.model, &layer.b[k], eval, h / 2);
      stats.update(glayer.b[k], fd, fd2, name + ".b" + std::to_string(k));
    }
  };
  check_layer(s.model.mlp.trunk[0], grads.mlp.trunk[0], 5, "trunk0");
  check_layer(s.model.mlp.trunk[1], grads.mlp.trunk[1], 5, "trunk1");
  check_layer(s.model.mlp.head_mu, grads.mlp.head_mu, 1, "head_mu");
  check_layer(s.model.mlp.head_rot, grads.mlp.head_rot, 1, "head_rot");
  check_layer(s.model.mlp.head_color, grads.mlp.head_color, 1, "head_color");

  EXPECT_GT(stats.checked, 200);
  EXPECT_LT(stats.max_err, 1e-4) << "worst: " << stats.worst;
}

TEST(Stage2Graph, FullGradientCheckAndFreeze) {
  auto s = oracles::make_micro_setup<double>(4);
  const int frame = 0, iter = 3;

  ModelGrads<double> grads;
  grads.init_from(s.model);
  {
    Stage2Graph<double> graph(s.model, s.data, frame, iter, s.cfg);
    EXPECT_FALSE(graph.pixels().empty());
    graph.backward(grads);
  }

  // frozen classes receive no gradient at all
  for (const auto& gg : grads.gaussians) {
    EXPECT_EQ(length(gg.mu), 0.0);
    EXPECT_EQ(gg.rot.w, 0.0);
    EXPECT_EQ(gg.su, 0.0);
    EXPECT_EQ(gg.sv, 0.0);
    EXPECT_EQ(gg.gate_logit, 0.0);
  }
  for (const auto& l : grads.mlp.trunk)
    for (double w : l.w) EXPECT_EQ(w, 0.0);
  for (double w : grads.mlp.head_mu.w) EXPECT_EQ(w, 0.0);
  for (double w : grads.mlp.head_rot.w) EXPECT_EQ(w, 0.0);

  auto eval = [&]() {
    return Stage2Graph<double>(s.model, s.data, frame, iter, s.cfg).total();
  };
  const double h = 1e-4;
  oracles::GradCheckStats stats;
  for (size_t gi = 0; gi < s.model.gaussians.size(); ++gi) {
    auto& g = s.model.gaussians[gi];
    auto& gg = grads.gaussians[gi];
    double* params[] = {&g.albedo.x, &g.albedo.y, &g.albedo.z, &g.rough,
                        &g.color.x,  &g.color.y,  &g.color.z,  &g.opacity};
    double analytic[] = {gg.albedo.x, gg.albedo.y, gg.albedo.z, gg.rough,
                         gg.color.x,  gg.color.y,  gg.color.z,  gg.opacity};
    for (int k = 0; k < 8; ++k) {
      double fd = oracles::central_difference<double>(s.model, params[k], eval, h);
      double fd2 = oracles::central_difference<double>(s.model, params[k], eval, h / 2);
      stats.update(analytic[k], fd, fd2,
                   "gaussian " + std::to_string(gi) + " p" + std::to_string(k));
    }
  }
  for (size_t t = 0; t < s.model.env.size(); ++t)
    for (int c = 0; c < 3; ++c) {
      double fd = oracles::central_difference<double>(
          s.model, &s.model.env.texels[t][c], eval, h);
      double fd2 = oracles::central_difference<double>(
          s.model, &s.model.env.texels[t][c], eval, h / 2);
      stats.update(grads.env[t][c], fd, fd2, "env " + std::to_string(t));
    }
  for (size_t k = 0; k < s.model.mlp.head_color.w.size(); k += 3) {
    double fd = oracles::central_difference<double>(s.model, &s.model.mlp.head_color.w[k], eval,
                                                    h);
    double fd2 = oracles::central_difference<double>(s.model, &s.model.mlp.head_color.w[k], eval,
                                                     h / 2);
    stats.update(grads.mlp.head_color.w[k], fd, fd2, "head_color.w" + std::to_string(k));
  }

  EXPECT_GT(stats.checked, 100);
  EXPECT_LT(stats.max_err, 1e-4) << "worst: " << stats.worst;
}

TEST(Checkpoint, RoundTripIsExact) {
  auto s = oracles::make_micro_setup<float>(5);
  auto dir = (std::filesystem::temp_directory_path() / "lumikit_ckpt_test").string();
  TrainConfig<float> cfg = s.cfg;
  s.model.dynamic_label = {1, 0, 1, 0, 0};
  save_checkpoint(s.model, cfg, dir, "stage1");

  std::string stage;
  Model<float> back = load_checkpoint<float>(dir, &stage);
  EXPECT_EQ(stage, "stage1");
  ASSERT_EQ(back.gaussians.size(), s.model.gaussians.size());
  for (size_t i = 0; i < back.gaussians.size(); ++i) {
    EXPECT_EQ(back.gaussians[i].mu.x, s.model.gaussians[i].mu.x);
    EXPECT_EQ(back.gaussians[i].rot.z, s.model.gaussians[i].rot.z);
    EXPECT_EQ(back.gaussians[i].albedo.y, s.model.gaussians[i].albedo.y);
    EXPECT_EQ(back.gaussians[i].gate_logit, s.model.gaussians[i].gate_logit);
  }
  ASSERT_EQ(back.dynamic_label.size(), 5u);
  EXPECT_EQ(back.dynamic_label[0], 1);
  size_t pos = 0;
  s.model.mlp.for_each_layer([&](Dense<float>& l) {
    (void)l;
    ++pos;
  });
  std::vector<float> orig, loaded;
  s.model.mlp.for_each_layer([&](Dense<float>& l) {
    orig.insert(orig.end(), l.w.begin(), l.w.end());
  });
  back.mlp.for_each_layer([&](Dense<float>& l) {
    loaded.insert(loaded.end(), l.w.begin(), l.w.end());
  });
  ASSERT_EQ(orig.size(), loaded.size());
  for (size_t i = 0; i < orig.size(); ++i) EXPECT_EQ(orig[i], loaded[i]);
  for (size_t i = 0; i < back.env.texels.size(); ++i)
    EXPECT_EQ(back.env.texels[i].x, s.model.env.texels[i].x);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, Stage2FreezesGeometryBitwise) {
  auto s = oracles::make_micro_setup<float>(6);
  s.cfg.stage2_iters = 5;
  s.cfg.render = {};  // production settings are fine here
  s.cfg.shade = {};
  s.cfg.shade.use_bvh = true;
  s.cfg.stage2.pixel_samples = 8;
  s.cfg.stage2.n_rays = 16;

  auto frozen = s.model.gaussians;
  train_stage2(s.model, s.data, s.cfg);
  for (size_t i = 0; i < frozen.size(); ++i) {
    EXPECT_EQ(s.model.gaussians[i].mu.x, frozen[i].mu.x);
    EXPECT_EQ(s.model.gaussians[i].mu.y, frozen[i].mu.y);
    EXPECT_EQ(s.model.gaussians[i].mu.z, frozen[i].mu.z);
    EXPECT_EQ(s.model.gaussians[i].rot.w, frozen[i].rot.w);
    EXPECT_EQ(s.model.gaussians[i].rot.x, frozen[i].rot.x);
    EXPECT_EQ(s.model.gaussians[i].su, frozen[i].su);
    EXPECT_EQ(s.model.gaussians[i].sv, frozen[i].sv);
    EXPECT_EQ(s.model.gaussians[i].gate_logit, frozen[i].gate_logit);
  }
}

TEST(Trainer, MissingStage1StateThrows) {
  auto s = oracles::make_micro_setup<float>(7);
  Model<float> empty;
  EXPECT_THROW(train_stage2(empty, s.data, s.cfg), std::invalid_argument);
  Dataset<float> no_frames;
  EXPECT_THROW(train_stage1(s.model, no_frames, s.cfg), std::invalid_argument);
}

TEST(Trainer, SeedDeterminism) {
  auto run = [](uint64_t seed) {
    auto s = oracles::make_micro_setup<float>(8);
    s.cfg.seed = seed;
    s.cfg.stage1_iters = 12;
    s.cfg.render = {};
    train_stage1(s.model, s.data, s.cfg);
    return s.model;
  };
  Model<float> a = run(42), b = run(42), c = run(43);
  bool any_diff_seed43 = false;
  for (size_t i = 0; i < a.gaussians.size(); ++i) {
    EXPECT_EQ(a.gaussians[i].mu.x, b.gaussians[i].mu.x);
    EXPECT_EQ(a.gaussians[i].opacity, b.gaussians[i].opacity);
    EXPECT_EQ(a.gaussians[i].gate_logit, b.gaussians[i].gate_logit);
    any_diff_seed43 |= a.gaussians[i].mu.x != c.gaussians[i].mu.x;
  }
  EXPECT_TRUE(any_diff_seed43);
}
