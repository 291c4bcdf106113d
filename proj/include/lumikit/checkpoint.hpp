// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumikit/model.hpp"
#include "lumikit/trainer.hpp"

namespace lumikit {

// Checkpoint directory:
//   gaussians.bin   flat little-endian float32 records
//   gaussians.json  record schema, count, per-gaussian labels
//   mlp.bin/.json   weight blob plus layer shapes and encoding sizes
//   env.pfm         lat-long environment map
//   config.json     resolved training configuration and stage markers

inline constexpr int kGaussianRecordFloats = 18;
inline const char* kGaussianFields =
    "mu[3],rot[4],su,sv,opacity,color[3],albedo[3],rough,gate_logit";

namespace detail {

inline void write_f32_blob(const std::string& path, const std::vector<float>& blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

inline std::vector<float> read_f32_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto bytes = in.tellg();
  in.seekg(0);
  std::vector<float> blob(static_cast<size_t>(bytes) / sizeof(float));
  in.read(reinterpret_cast<char*>(blob.data()), bytes);
  return blob;
}

}  // namespace detail

template <typename T>
inline void save_checkpoint(const Model<T>& model, const TrainConfig<T>& cfg,
                            const std::string& dir, const std::string& stage_done) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<float> blob;
  blob.reserve(model.gaussians.size() * kGaussianRecordFloats);
  for (const auto& g : model.gaussians) {
    float rec[kGaussianRecordFloats] = {
        float(g.mu.x),     float(g.mu.y),     float(g.mu.z),     float(g.rot.w),
        float(g.rot.x),    float(g.rot.y),    float(g.rot.z),    float(g.su),
        float(g.sv),       float(g.opacity),  float(g.color.x),  float(g.color.y),
        float(g.color.z),  float(g.albedo.x), float(g.albedo.y), float(g.albedo.z),
        float(g.rough),    float(g.gate_logit)};
    blob.insert(blob.end(), rec, rec + kGaussianRecordFloats);
  }
  detail::write_f32_blob((fs::path(dir) / "gaussians.bin").string(), blob);

  nlohmann::json gschema;
  gschema["count"] = model.gaussians.size();
  gschema["floats_per_record"] = kGaussianRecordFloats;
  gschema["fields"] = kGaussianFields;
  gschema["labels"] = model.dynamic_label;
  gschema["scene_extent"] = model.scene_extent;
  std::ofstream(fs::path(dir) / "gaussians.json") << gschema.dump(1) << "\n";

  std::vector<float> mblob;
  nlohmann::json layers = nlohmann::json::array();
  model.mlp.for_each_layer([&](const Dense<T>& l) {
    layers.push_back({{"in", l.in}, {"out", l.out}});
    for (T w : l.w) mblob.push_back(float(w));
    for (T b : l.b) mblob.push_back(float(b));
  });
  detail::write_f32_blob((fs::path(dir) / "mlp.bin").string(), mblob);
  nlohmann::json mhdr;
  mhdr["layers"] = layers;
  mhdr["enc_t"] = model.mlp.enc_t;
  mhdr["enc_mu"] = model.mlp.enc_mu;
  mhdr["depth"] = model.mlp.depth;
  mhdr["width"] = model.mlp.width;
  std::ofstream(fs::path(dir) / "mlp.json") << mhdr.dump(1) << "\n";

  write_envmap_pfm(model.env, (fs::path(dir) / "env.pfm").string());

  nlohmann::json c;
  c["stage_done"] = stage_done;
  c["seed"] = cfg.seed;
  c["stage1_iters"] = cfg.stage1_iters;
  c["stage2_iters"] = cfg.stage2_iters;
  c["no_gate"] = cfg.no_gate;
  c["no_delta_color"] = cfg.no_delta_color;
  c["gate_temperature"] = model.gate_temperature;
  c["lambda_sep"] = cfg.stage1.lambda_sep;
  c["separation_start_iter"] = cfg.stage1.separation_start_iter;
  c["deform_warmup_iter"] = cfg.stage1.deform_warmup_iter;
  c["pixel_samples"] = cfg.stage2.pixel_samples;
  c["n_rays"] = cfg.stage2.n_rays;
  std::ofstream(fs::path(dir) / "config.json") << c.dump(1) << "\n";
}

template <typename T>
inline Model<T> load_checkpoint(const std::string& dir, std::string* stage_done = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::exists(fs::path(dir) / "gaussians.bin"))
    throw std::runtime_error("load_checkpoint: no gaussians.bin under " + dir);
  Model<T> model;

  nlohmann::json gschema;
  std::ifstream(fs::path(dir) / "gaussians.json") >> gschema;
  size_t count = gschema.at("count").get<size_t>();
  auto blob = detail::read_f32_blob((fs::path(dir) / "gaussians.bin").string());
  if (blob.size() != count * kGaussianRecordFloats)
    throw std::runtime_error("load_checkpoint: gaussians.bin size mismatch");
  model.gaussians.resize(count);
  for (size_t i = 0; i < count; ++i) {
    const float* r = blob.data() + i * kGaussianRecordFloats;
    Gaussian2D<T>& g = model.gaussians[i];
    g.mu = {T(r[0]), T(r[1]), T(r[2])};
    g.rot = {T(r[3]), T(r[4]), T(r[5]), T(r[6])};
    g.su = T(r[7]);
    g.sv = T(r[8]);
    g.opacity = T(r[9]);
    g.color = {T(r[10]), T(r[11]), T(r[12])};
    g.albedo = {T(r[13]), T(r[14]), T(r[15])};
    g.rough = T(r[16]);
    g.gate_logit = T(r[17]);
  }
  if (gschema.contains("labels"))
    model.dynamic_label = gschema["labels"].get<std::vector<uint8_t>>();
  model.scene_extent = T(gschema.value("scene_extent", 1.0));

  nlohmann::json mhdr;
  std::ifstream(fs::path(dir) / "mlp.json") >> mhdr;
  model.mlp.init(mhdr.at("depth").get<int>(), mhdr.at("width").get<int>(),
                 mhdr.at("enc_t").get<int>(), mhdr.at("enc_mu").get<int>(), 0);
  auto mblob = detail::read_f32_blob((fs::path(dir) / "mlp.bin").string());
  size_t pos = 0;
  model.mlp.for_each_layer([&](Dense<T>& l) {
    for (auto& w : l.w) w = T(mblob.at(pos++));
    for (auto& b : l.b) b = T(mblob.at(pos++));
  });

  model.env = read_envmap_pfm<T>((fs::path(dir) / "env.pfm").string());

  nlohmann::json c;
  std::ifstream(fs::path(dir) / "config.json") >> c;
  model.gate_temperature = T(c.value("gate_temperature", 0.5));
  if (stage_done) *stage_done = c.value("stage_done", "");
  return model;
}

}  // namespace lumikit
