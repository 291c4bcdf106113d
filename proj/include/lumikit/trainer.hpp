// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumikit/adam.hpp"
#include "lumikit/dataset.hpp"
#include "lumikit/deform.hpp"
#include "lumikit/losses.hpp"
#include "lumikit/model.hpp"
#include "lumikit/rasterize.hpp"
#include "lumikit/shade.hpp"

namespace lumikit {

// Aborts training when the objective stops being finite.
struct NumericError : std::runtime_error {
  int iter;
  explicit NumericError(int iter_)
      : std::runtime_error("non-finite loss at iteration " + std::to_string(iter_)), iter(iter_) {}
};

template <typename T>
struct TrainConfig {
  int stage1_iters = 3000;
  int stage2_iters = 2000;
  uint64_t seed = 0;

  Stage1Weights<T> stage1;
  Stage2Weights<T> stage2;

  // learning rates
  T lr_mu = T(1.6e-4);  // scaled by scene extent, exponentially decayed
  T lr_mu_final_ratio = T(0.1);
  T lr_rot = T(1e-3);
  T lr_scale = T(5e-3);
  T lr_opacity = T(5e-2);
  T lr_color = T(2.5e-3);
  T lr_gate = T(5e-2);
  T lr_mlp = T(8e-4);
  T lr_mlp_final = T(8e-5);
  T lr_env = T(0.2);
  T lr_albedo = T(0.01);
  T lr_rough = T(5e-3);
  T finetune_ratio = T(0.1);  // stage-2 fine-tuning of stage-1 parameters

  // model shape
  int mlp_depth = 4, mlp_width = 64;
  int enc_time = 6, enc_mu = 10;
  int env_width = 32, env_height = 16;

  // ablations
  bool no_gate = false;         // P_tilde fixed at 1, no separation loss
  bool no_delta_color = false;  // color head zeroed

  int nan_check_interval = 100;

  RenderSettings<T> render;
  ShadeOptions<T> shade;

  static TrainConfig paper_scale() {
    TrainConfig cfg;
    cfg.stage1_iters = 35000;
    cfg.stage2_iters = 20000;
    cfg.mlp_depth = 8;
    cfg.mlp_width = 256;
    cfg.stage2.pixel_samples = 512;
    cfg.stage2.n_rays = 512;
    return cfg;
  }
};

namespace detail {

// rng stream tags so every consumer draws from an independent stream
inline constexpr uint64_t kStreamFrame = 0x46524d45;  // frame picks
inline constexpr uint64_t kStreamGate = 0x47415445;   // concrete gate draws
inline constexpr uint64_t kStreamPixel = 0x50495853;  // stage-2 pixel subset

template <typename T>
inline std::vector<T*> flatten_mlp(DeformationMlp<T>& mlp) {
  std::vector<T*> out;
  mlp.for_each_layer([&](Dense<T>& l) {
    for (auto& w : l.w) out.push_back(&w);
    for (auto& b : l.b) out.push_back(&b);
  });
  return out;
}

}  // namespace detail

// -----------------------------------------------------------------------------
// STAGE 1 GRAPH
// -----------------------------------------------------------------------------
// One taped forward pass (deform -> rasterize -> losses); backward() may be
// called exactly once.

template <typename T>
class Stage1Graph {
 public:
  Stage1Graph(const Model<T>& model, const Dataset<T>& data, int frame, int iter,
              const TrainConfig<T>& cfg)
      : model_(model), data_(data), cfg_(cfg), frame_(frame), iter_(iter) {
    DeformSettings<T> ds;
    ds.time = data.cameras[frame].time;
    ds.temperature = model.gate_temperature;
    ds.gate_mode = cfg.no_gate ? GateMode::kDisabled : GateMode::kStochastic;
    ds.zero_deltas = iter < cfg.stage1.deform_warmup_iter;
    ds.zero_delta_color = cfg.no_delta_color;
    Rng gate_rng(cfg.seed ^ detail::kStreamGate, static_cast<uint64_t>(iter));
    scene_ = build_deformed_scene(model.gaussians, model.mlp, ds, &gate_rng, &dctx_);
    render_ = render_scene(scene_, data.cameras[frame], cfg.render);

    gt_ = &data.frames[frame];
    terms_.recon = loss_reconstruction(render_.color, *gt_);
    terms_.normal = loss_normal_consistency(render_, data.cameras[frame]);
    terms_.dist = loss_depth_distortion(render_);
    terms_.opacity = loss_opacity_mask(render_.opacity, data.masks[frame]);
    terms_.sep = loss_separation(model.gaussians);
    terms_.delta_color = loss_delta_sq(dctx_.delta_color);
    terms_.delta_mu = loss_delta_sq(dctx_.delta_mu);
    total_ = total_stage1(terms_, cfg.stage1, iter);
  }

  T total() const { return total_; }
  const Stage1Terms<T>& terms() const { return terms_; }
  const RenderResult<T>& render() const { return render_; }
  const DeformContext<T>& deform_context() const { return dctx_; }
  const SplatScene<T>& scene() const { return scene_; }

  void backward(ModelGrads<T>& grads) {
    if (consumed_) throw std::logic_error("Stage1Graph::backward: graph already consumed");
    consumed_ = true;
    const Camera<T>& cam = data_.cameras[frame_];
    const Stage1Weights<T>& w = cfg_.stage1;

    RenderAdjoint<T> adj(render_.width(), render_.height());
    adj.d_hit_w.assign(render_.hits.size(), T(0));
    adj.d_hit_z.assign(render_.hits.size(), T(0));
    adj.d_hit_n.assign(render_.hits.size(), Vec3<T>{});

    loss_reconstruction_backward(render_.color, *gt_, T(1), adj.d_color);
    loss_normal_consistency_backward(render_, cam, w.lambda_normal, adj);
    loss_depth_distortion_backward(render_, w.lambda_dist, adj);
    loss_opacity_mask_backward(render_.opacity, data_.masks[frame_], w.lambda_opacity,
                               adj.d_opacity);

    SplatSceneGrads<T> sg;
    sg.resize_zero(scene_.size());
    render_scene_backward(scene_, cam, render_, adj, GradMask{}, sg);

    if (!cfg_.no_gate && iter_ >= w.separation_start_iter)
      loss_separation_backward(model_.gaussians, w.lambda_sep, grads.gaussians);

    std::vector<Vec3<T>> d_delta_mu(scene_.size(), Vec3<T>{});
    std::vector<Vec3<T>> d_delta_color(scene_.size(), Vec3<T>{});
    loss_delta_sq_backward(dctx_.delta_mu, w.lambda_delta_mu, d_delta_mu);
    loss_delta_sq_backward(dctx_.delta_color, w.lambda_delta_color, d_delta_color);

    DeformGradMask mask;
    mask.mlp.head_color = !cfg_.no_delta_color;
    deform_backward(model_.gaussians, model_.mlp, dctx_, sg, &d_delta_mu, &d_delta_color, mask,
                    grads.gaussians, grads.mlp);
  }

 private:
  const Model<T>& model_;
  const Dataset<T>& data_;
  const TrainConfig<T>& cfg_;
  int frame_, iter_;
  DeformContext<T> dctx_;
  SplatScene<T> scene_;
  RenderResult<T> render_;
  const ImageBuffer<T>* gt_ = nullptr;
  Stage1Terms<T> terms_;
  T total_ = 0;
  bool consumed_ = false;
};

// -----------------------------------------------------------------------------
// STAGE 2 GRAPH
// -----------------------------------------------------------------------------

template <typename T>
class Stage2Graph {
 public:
  Stage2Graph(const Model<T>& model, const Dataset<T>& data, int frame, int iter,
              const TrainConfig<T>& cfg)
      : model_(model), data_(data), cfg_(cfg), frame_(frame), iter_(iter) {
    DeformSettings<T> ds;
    ds.time = data.cameras[frame].time;
    ds.temperature = model.gate_temperature;
    ds.gate_mode = cfg.no_gate ? GateMode::kDisabled : GateMode::kInference;
    ds.zero_delta_color = cfg.no_delta_color;
    scene_ = build_deformed_scene(model.gaussians, model.mlp, ds, nullptr, &dctx_);
    render_ = render_scene(scene_, data.cameras[frame], cfg.render);
    gt_ = &data.frames[frame];
    terms_.recon = loss_reconstruction(render_.color, *gt_);

    if (cfg.shade.use_bvh) {
      bvh_.build(scene_, std::max(cfg.shade.cutoff_sigma, T(3)));
      bvh_ptr_ = &bvh_;
    }

    // Uniform pixel subset without replacement from the covered region.
    std::vector<int32_t> candidates;
    int w = render_.width(), h = render_.height();
    for (int i = 0; i < w * h; ++i) {
      if (render_.opacity.data[i] > cfg.shade.opacity_threshold &&
          length(render_.normal.rgb(i % w, i / w)) > T(0.5))
        candidates.push_back(i);
    }
    Rng pick_rng(cfg.seed ^ detail::kStreamPixel, static_cast<uint64_t>(iter));
    int want = std::min<int>(cfg.stage2.pixel_samples, static_cast<int>(candidates.size()));
    for (int i = 0; i < want; ++i) {
      size_t j = i + pick_rng.next_below(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(want);
    pixels_ = std::move(candidates);

    // Shade the subset; one rng stream per (iteration, pixel).
    ShadeOptions<T> sopts = cfg.shade;
    sopts.n_rays = cfg.stage2.n_rays;
    sopts.indirect = IndirectMode::kStage1Colors;
    pixel_ctx_.resize(pixels_.size());
    pbr_.assign(pixels_.size(), Vec3<T>{});
    T l1 = 0;
    const Camera<T>& cam = data.cameras[frame];
    for (size_t k = 0; k < pixels_.size(); ++k) {
      int px = pixels_[k] % w, py = pixels_[k] / w;
      Rng rng(cfg.seed ^ (static_cast<uint64_t>(iter) << 20), static_cast<uint64_t>(pixels_[k]));
      pbr_[k] = shade_point<T>(render_.position.rgb(px, py), render_.normal.rgb(px, py),
                               render_.albedo.rgb(px, py), render_.rough.at(px, py)[0], cam.pos,
                               model.env, scene_, bvh_ptr_, sopts, rng, &pixel_ctx_[k]);
      Vec3<T> gt_px = gt_->rgb(px, py);
      l1 += std::abs(pbr_[k].x - gt_px.x) + std::abs(pbr_[k].y - gt_px.y) +
            std::abs(pbr_[k].z - gt_px.z);
    }
    terms_.pbr_l1 = pixels_.empty() ? T(0) : l1 / (T(pixels_.size()) * 3);
    terms_.env_reg = loss_env_lower(model.env);
    total_ = total_stage2(terms_, cfg.stage2);
  }

  T total() const { return total_; }
  const Stage2Terms<T>& terms() const { return terms_; }
  const RenderResult<T>& render() const { return render_; }
  const std::vector<int32_t>& pixels() const { return pixels_; }
  const std::vector<Vec3<T>>& pbr_pixels() const { return pbr_; }
  const SplatScene<T>& scene() const { return scene_; }

  void backward(ModelGrads<T>& grads) {
    if (consumed_) throw std::logic_error("Stage2Graph::backward: graph already consumed");
    consumed_ = true;
    const Camera<T>& cam = data_.cameras[frame_];
    int w = render_.width();

    ShadeOptions<T> sopts = cfg_.shade;
    sopts.n_rays = cfg_.stage2.n_rays;
    sopts.indirect = IndirectMode::kStage1Colors;

    // Stage-2 gradient surface: materials, environment, color, opacity. The
    // geometry (mu, rot, scales) and gate stay frozen.
    GradMask render_mask;
    render_mask.geometry = false;

    RenderAdjoint<T> adj(render_.width(), render_.height());
    loss_reconstruction_backward(render_.color, *gt_, T(1), adj.d_color);

    SplatSceneGrads<T> sg;
    sg.resize_zero(scene_.size());

    if (!pixels_.empty()) {
      T norm = 1 / (T(pixels_.size()) * 3);
      for (size_t k = 0; k < pixels_.size(); ++k) {
        int px = pixels_[k] % w, py = pixels_[k] / w;
        Vec3<T> gt_px = gt_->rgb(px, py);
        Vec3<T> d_c{pbr_[k].x > gt_px.x ? norm : (pbr_[k].x < gt_px.x ? -norm : T(0)),
                    pbr_[k].y > gt_px.y ? norm : (pbr_[k].y < gt_px.y ? -norm : T(0)),
                    pbr_[k].z > gt_px.z ? norm : (pbr_[k].z < gt_px.z ? -norm : T(0))};
        ShadePixelGrads<T> pg;
        shade_point_backward(cam.pos, model_.env, scene_, sopts, pixel_ctx_[k], d_c, render_mask,
                             pg, sg, grads.env);
        // route the per-pixel adjoints into the G-buffer maps
        adj.d_position.set_rgb(px, py, adj.d_position.rgb(px, py) + pg.d_x);
        adj.d_normal.set_rgb(px, py, adj.d_normal.rgb(px, py) + pg.d_n);
        adj.d_albedo.set_rgb(px, py, adj.d_albedo.rgb(px, py) + pg.d_albedo);
        adj.d_rough.at(px, py)[0] += pg.d_rough;
      }
    }

    loss_env_lower_backward(model_.env, cfg_.stage2.lambda_env, grads.env);

    render_scene_backward(scene_, cam, render_, adj, render_mask, sg);

    DeformGradMask dmask;
    dmask.geometry = false;
    dmask.gate = false;
    dmask.mlp.trunk = false;
    dmask.mlp.head_mu = false;
    dmask.mlp.head_rot = false;
    dmask.mlp.head_color = !cfg_.no_delta_color;
    dmask.mlp.input_mu = false;
    deform_backward<T>(model_.gaussians, model_.mlp, dctx_, sg, nullptr, nullptr, dmask,
                       grads.gaussians, grads.mlp);
  }

 private:
  const Model<T>& model_;
  const Dataset<T>& data_;
  const TrainConfig<T>& cfg_;
  int frame_, iter_;
  DeformContext<T> dctx_;
  SplatScene<T> scene_;
  SplatBvh<T> bvh_;
  const SplatBvh<T>* bvh_ptr_ = nullptr;
  RenderResult<T> render_;
  const ImageBuffer<T>* gt_ = nullptr;
  std::vector<int32_t> pixels_;
  std::vector<Vec3<T>> pbr_;
  std::vector<ShadePixelCtx<T>> pixel_ctx_;
  Stage2Terms<T> terms_;
  T total_ = 0;
  bool consumed_ = false;
};

// -----------------------------------------------------------------------------
// PARAMETER GROUPS
// -----------------------------------------------------------------------------

namespace detail {

template <typename T>
inline ParamGroup<T> gaussian_group(Model<T>& model, ModelGrads<T>& grads, const std::string& name,
                                    T lr, int width, std::function<T*(Gaussian2D<T>&, int)> field,
                                    std::function<T*(GaussianGrad<T>&, int)> gfield,
                                    std::function<void(Gaussian2D<T>&)> clamp_one) {
  ParamGroup<T> g;
  g.name = name;
  g.lr = lr;
  auto* gs = &model.gaussians;
  auto* gr = &grads.gaussians;
  g.count = [gs, width]() { return gs->size() * width; };
  g.get = [gs, width, field](size_t i) { return *field((*gs)[i / width], static_cast<int>(i % width)); };
  g.set = [gs, width, field](size_t i, T v) { *field((*gs)[i / width], static_cast<int>(i % width)) = v; };
  g.grad = [gr, width, gfield](size_t i) { return *gfield((*gr)[i / width], static_cast<int>(i % width)); };
  if (clamp_one)
    g.clamp = [gs, clamp_one]() {
      for (auto& gauss : *gs) clamp_one(gauss);
    };
  return g;
}

template <typename T>
inline std::vector<ParamGroup<T>> stage1_groups(Model<T>& model, ModelGrads<T>& grads,
                                                const TrainConfig<T>& cfg) {
  std::vector<ParamGroup<T>> groups;
  groups.push_back(gaussian_group<T>(
      model, grads, "mu", cfg.lr_mu * model.scene_extent, 3,
      [](Gaussian2D<T>& g, int i) { return &g.mu[i]; },
      [](GaussianGrad<T>& g, int i) { return &g.mu[i]; }, nullptr));
  groups.push_back(gaussian_group<T>(
      model, grads, "rot", cfg.lr_rot, 4, [](Gaussian2D<T>& g, int i) { return &g.rot[i]; },
      [](GaussianGrad<T>& g, int i) { return &g.rot[i]; },
      [](Gaussian2D<T>& g) { g.rot = g.rot.normalized(); }));
  groups.push_back(gaussian_group<T>(
      model, grads, "scale", cfg.lr_scale, 2,
      [](Gaussian2D<T>& g, int i) { return i == 0 ? &g.su : &g.sv; },
      [](GaussianGrad<T>& g, int i) { return i == 0 ? &g.su : &g.sv; },
      [](Gaussian2D<T>& g) {
        g.su = std::max(g.su, T(1e-4));
        g.sv = std::max(g.sv, T(1e-4));
      }));
  groups.push_back(gaussian_group<T>(
      model, grads, "opacity", cfg.lr_opacity, 1,
      [](Gaussian2D<T>& g, int) { return &g.opacity; },
      [](GaussianGrad<T>& g, int) { return &g.opacity; },
      [](Gaussian2D<T>& g) { g.opacity = std::clamp(g.opacity, T(0), T(1)); }));
  groups.push_back(gaussian_group<T>(
      model, grads, "color", cfg.lr_color, 3, [](Gaussian2D<T>& g, int i) { return &g.color[i]; },
      [](GaussianGrad<T>& g, int i) { return &g.color[i]; },
      [](Gaussian2D<T>& g) { g.color = clamp01(g.color); }));
  if (!cfg.no_gate)
    groups.push_back(gaussian_group<T>(
        model, grads, "gate", cfg.lr_gate, 1,
        [](Gaussian2D<T>& g, int) { return &g.gate_logit; },
        [](GaussianGrad<T>& g, int) { return &g.gate_logit; }, nullptr));

  // MLP weights: one flat group with a scheduled learning rate.
  ParamGroup<T> mlp;
  mlp.name = "mlp";
  mlp.lr = cfg.lr_mlp;
  auto params = std::make_shared<std::vector<T*>>(flatten_mlp(model.mlp));
  auto gptrs = std::make_shared<std::vector<T*>>(flatten_mlp(grads.mlp));
  mlp.count = [params]() { return params->size(); };
  mlp.get = [params](size_t i) { return *(*params)[i]; };
  mlp.set = [params](size_t i, T v) { *(*params)[i] = v; };
  mlp.grad = [gptrs](size_t i) { return *(*gptrs)[i]; };
  groups.push_back(std::move(mlp));
  return groups;
}

template <typename T>
inline std::vector<ParamGroup<T>> stage2_groups(Model<T>& model, ModelGrads<T>& grads,
                                                const TrainConfig<T>& cfg) {
  std::vector<ParamGroup<T>> groups;
  groups.push_back(gaussian_group<T>(
      model, grads, "albedo", cfg.lr_albedo, 3,
      [](Gaussian2D<T>& g, int i) { return &g.albedo[i]; },
      [](GaussianGrad<T>& g, int i) { return &g.albedo[i]; },
      [](Gaussian2D<T>& g) { g.albedo = clamp01(g.albedo); }));
  groups.push_back(gaussian_group<T>(
      model, grads, "rough", cfg.lr_rough, 1, [](Gaussian2D<T>& g, int) { return &g.rough; },
      [](GaussianGrad<T>& g, int) { return &g.rough; },
      [](Gaussian2D<T>& g) { g.rough = std::clamp(g.rough, T(0), T(1)); }));

  ParamGroup<T> env;
  env.name = "env";
  env.lr = cfg.lr_env;
  auto* em = &model.env;
  auto* eg = &grads.env;
  env.count = [em]() { return em->size() * 3; };
  env.get = [em](size_t i) { return em->texels[i / 3][static_cast<int>(i % 3)]; };
  env.set = [em](size_t i, T v) { em->texels[i / 3][static_cast<int>(i % 3)] = v; };
  env.grad = [eg](size_t i) { return (*eg)[i / 3][static_cast<int>(i % 3)]; };
  env.clamp = [em]() { em->clamp_nonnegative(); };
  groups.push_back(std::move(env));

  // fine-tuned stage-1 parameters at a tenth of their original rates
  groups.push_back(gaussian_group<T>(
      model, grads, "color_ft", cfg.lr_color * cfg.finetune_ratio, 3,
      [](Gaussian2D<T>& g, int i) { return &g.color[i]; },
      [](GaussianGrad<T>& g, int i) { return &g.color[i]; },
      [](Gaussian2D<T>& g) { g.color = clamp01(g.color); }));
  groups.push_back(gaussian_group<T>(
      model, grads, "opacity_ft", cfg.lr_opacity * cfg.finetune_ratio, 1,
      [](Gaussian2D<T>& g, int) { return &g.opacity; },
      [](GaussianGrad<T>& g, int) { return &g.opacity; },
      [](Gaussian2D<T>& g) { g.opacity = std::clamp(g.opacity, T(0), T(1)); }));

  if (!cfg.no_delta_color) {
    ParamGroup<T> head;
    head.name = "mlp_color_head_ft";
    head.lr = cfg.lr_mlp * cfg.finetune_ratio;
    auto* layer = &model.mlp.head_color;
    auto* glayer = &grads.mlp.head_color;
    head.count = [layer]() { return layer->w.size() + layer->b.size(); };
    head.get = [layer](size_t i) {
      return i < layer->w.size() ? layer->w[i] : layer->b[i - layer->w.size()];
    };
    head.set = [layer](size_t i, T v) {
      (i < layer->w.size() ? layer->w[i] : layer->b[i - layer->w.size()]) = v;
    };
    head.grad = [glayer](size_t i) {
      return i < glayer->w.size() ? glayer->w[i] : glayer->b[i - glayer->w.size()];
    };
    groups.push_back(std::move(head));
  }
  return groups;
}

}  // namespace detail

// -----------------------------------------------------------------------------
// TRAINING LOOPS
// -----------------------------------------------------------------------------

template <typename T>
struct TrainLogger {
  std::ofstream csv;
  void open_stage1(const std::string& path) {
    csv.open(path);
    csv << "iter,recon,normal,dist,opacity,sep,delta_color,delta_mu,total\n";
  }
  void open_stage2(const std::string& path) {
    csv.open(path);
    csv << "iter,recon,pbr_l1,env_reg,total\n";
  }
  void log_stage1(int iter, const Stage1Terms<T>& t, T total) {
    if (csv.is_open())
      csv << iter << ',' << t.recon << ',' << t.normal << ',' << t.dist << ',' << t.opacity << ','
          << t.sep << ',' << t.delta_color << ',' << t.delta_mu << ',' << total << "\n";
  }
  void log_stage2(int iter, const Stage2Terms<T>& t, T total) {
    if (csv.is_open())
      csv << iter << ',' << t.recon << ',' << t.pbr_l1 << ',' << t.env_reg << ',' << total << "\n";
  }
};

// Initializes the model from the dataset's surface samples when empty, then
// optimizes geometry, appearance, the gate logits and the deformation MLP.
template <typename T>
inline void train_stage1(Model<T>& model, const Dataset<T>& data, const TrainConfig<T>& cfg,
                         TrainLogger<T>* logger = nullptr) {
  if (data.frames.empty()) throw std::invalid_argument("train_stage1: empty dataset");
  if (model.gaussians.empty()) {
    if (data.init_points.empty())
      throw std::invalid_argument("train_stage1: dataset has no initialization points");
    init_gaussians_from_points(data.init_points, data.init_normals, data.init_dynamic,
                               data.suggested_scale, model);
    model.mlp.init(cfg.mlp_depth, cfg.mlp_width, cfg.enc_time, cfg.enc_mu, cfg.seed);
    model.env = EnvironmentMap<T>(cfg.env_width, cfg.env_height, Vec3<T>{T(0.5), T(0.5), T(0.5)});
  }

  ModelGrads<T> grads;
  grads.init_from(model);
  auto groups = detail::stage1_groups(model, grads, cfg);
  Rng frame_rng(cfg.seed ^ detail::kStreamFrame, 1);

  for (int iter = 0; iter < cfg.stage1_iters; ++iter) {
    int frame = static_cast<int>(frame_rng.next_below(data.frames.size()));
    Stage1Graph<T> graph(model, data, frame, iter, cfg);
    if (cfg.nan_check_interval > 0 && iter % cfg.nan_check_interval == 0 &&
        !std::isfinite(graph.total()))
      throw NumericError(iter);
    grads.zero();
    graph.backward(grads);

    T mlp_decay = std::pow(cfg.lr_mlp_final / cfg.lr_mlp, T(iter) / T(cfg.stage1_iters));
    T mu_decay = std::pow(cfg.lr_mu_final_ratio, T(iter) / T(cfg.stage1_iters));
    for (auto& group : groups) {
      if (group.name == "mlp") group.lr = cfg.lr_mlp * mlp_decay;
      if (group.name == "mu") group.lr = cfg.lr_mu * model.scene_extent * mu_decay;
      group.step();
    }
    if (logger) logger->log_stage1(iter, graph.terms(), graph.total());
  }
}

// Freezes geometry and the deformation trunk, then jointly optimizes albedo,
// roughness, the environment map and the fine-tuned stage-1 parameters.
template <typename T>
inline void train_stage2(Model<T>& model, const Dataset<T>& data, const TrainConfig<T>& cfg,
                         TrainLogger<T>* logger = nullptr) {
  if (model.gaussians.empty())
    throw std::invalid_argument("train_stage2: missing stage-1 state");
  if (data.frames.empty()) throw std::invalid_argument("train_stage2: empty dataset");

  // Canonical color approximates a pseudo-albedo; start materials there.
  for (auto& g : model.gaussians) g.albedo = g.color;
  model.env = EnvironmentMap<T>(cfg.env_width, cfg.env_height, Vec3<T>{T(0.5), T(0.5), T(0.5)});

  ModelGrads<T> grads;
  grads.init_from(model);
  auto groups = detail::stage2_groups(model, grads, cfg);
  Rng frame_rng(cfg.seed ^ detail::kStreamFrame, 2);

  for (int iter = 0; iter < cfg.stage2_iters; ++iter) {
    int frame = static_cast<int>(frame_rng.next_below(data.frames.size()));
    Stage2Graph<T> graph(model, data, frame, iter, cfg);
    if (cfg.nan_check_interval > 0 && iter % cfg.nan_check_interval == 0 &&
        !std::isfinite(graph.total()))
      throw NumericError(iter);
    grads.zero();
    graph.backward(grads);
    for (auto& group : groups) group.step();
    if (logger) logger->log_stage2(iter, graph.terms(), graph.total());
  }
}

// Mean inference-time gate over a labeled subset; the separation diagnostic.
template <typename T>
inline T mean_inference_gate(const Model<T>& model, bool dynamic_subset) {
  T sum = 0;
  int count = 0;
  for (size_t i = 0; i < model.gaussians.size(); ++i) {
    if (i < model.dynamic_label.size() && (model.dynamic_label[i] != 0) == dynamic_subset) {
      sum += gate_inference(model.gaussians[i].gate_logit, model.gate_temperature);
      ++count;
    }
  }
  return count > 0 ? sum / T(count) : T(0);
}

}  // namespace lumikit
