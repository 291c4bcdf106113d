// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumikit/camera.hpp"
#include "lumikit/envmap.hpp"
#include "lumikit/image.hpp"
#include "lumikit/math.hpp"

namespace lumikit {

// One variant (dynamic or static) of a generated scene, in memory.
template <typename T>
struct Dataset {
  std::vector<ImageBuffer<T>> frames;  // linear RGB
  std::vector<Camera<T>> cameras;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<ImageBuffer<T>> gt_albedo, gt_rough, gt_normal;
  EnvironmentMap<T> gt_env;
  bool has_gt_env = false;

  // surface-sampled initialization (SfM stand-in)
  std::vector<Vec3<T>> init_points;
  std::vector<Vec3<T>> init_normals;
  std::vector<uint8_t> init_dynamic;
  T suggested_scale = T(0.05);

  size_t frame_count() const { return frames.size(); }
};

namespace detail {

inline std::string frame_name(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d.%s", i, ext);
  return buf;
}

}  // namespace detail

// On-disk layout:
//   <dir>/frames/%04d.pfm   <dir>/masks/%04d.pgm   <dir>/cameras.json
//   <dir>/gt/{albedo,rough,normal}/%04d.pfm        <dir>/gt/env.pfm
//   <dir>/labels.json
template <typename T>
inline void save_dataset(const Dataset<T>& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  fs::create_directories(fs::path(dir) / "masks");
  fs::create_directories(fs::path(dir) / "gt" / "albedo");
  fs::create_directories(fs::path(dir) / "gt" / "rough");
  fs::create_directories(fs::path(dir) / "gt" / "normal");

  nlohmann::json cams = nlohmann::json::array();
  for (size_t i = 0; i < ds.frames.size(); ++i) {
    int idx = static_cast<int>(i);
    write_pfm(ds.frames[i], (fs::path(dir) / "frames" / detail::frame_name(idx, "pfm")).string());
    write_pgm_mask(ds.masks[i], ds.frames[i].width, ds.frames[i].height,
                   (fs::path(dir) / "masks" / detail::frame_name(idx, "pgm")).string());
    if (i < ds.gt_albedo.size())
      write_pfm(ds.gt_albedo[i],
                (fs::path(dir) / "gt" / "albedo" / detail::frame_name(idx, "pfm")).string());
    if (i < ds.gt_rough.size())
      write_pfm(ds.gt_rough[i],
                (fs::path(dir) / "gt" / "rough" / detail::frame_name(idx, "pfm")).string());
    if (i < ds.gt_normal.size())
      write_pfm(ds.gt_normal[i],
                (fs::path(dir) / "gt" / "normal" / detail::frame_name(idx, "pfm")).string());
    cams.push_back(camera_to_json(ds.cameras[i]));
  }
  std::ofstream(fs::path(dir) / "cameras.json") << cams.dump(1) << "\n";
  if (ds.has_gt_env) write_envmap_pfm(ds.gt_env, (fs::path(dir) / "gt" / "env.pfm").string());

  nlohmann::json labels;
  labels["suggested_scale"] = ds.suggested_scale;
  auto& pts = labels["points"] = nlohmann::json::array();
  auto& nrm = labels["normals"] = nlohmann::json::array();
  auto& dyn = labels["point_dynamic"] = nlohmann::json::array();
  for (size_t i = 0; i < ds.init_points.size(); ++i) {
    pts.push_back({ds.init_points[i].x, ds.init_points[i].y, ds.init_points[i].z});
    nrm.push_back({ds.init_normals[i].x, ds.init_normals[i].y, ds.init_normals[i].z});
    dyn.push_back(static_cast<int>(ds.init_dynamic[i]));
  }
  std::ofstream(fs::path(dir) / "labels.json") << labels.dump(1) << "\n";
}

template <typename T>
inline Dataset<T> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(fs::path(dir) / "cameras.json"))
    throw std::runtime_error("load_dataset: no cameras.json under " + dir);
  Dataset<T> ds;
  nlohmann::json cams;
  std::ifstream(fs::path(dir) / "cameras.json") >> cams;
  for (size_t i = 0; i < cams.size(); ++i) {
    int idx = static_cast<int>(i);
    ds.cameras.push_back(camera_from_json<T>(cams[i]));
    ds.frames.push_back(
        read_pfm<T>((fs::path(dir) / "frames" / detail::frame_name(idx, "pfm")).string()));
    int w, h;
    ds.masks.push_back(
        read_pgm_mask((fs::path(dir) / "masks" / detail::frame_name(idx, "pgm")).string(), w, h));
    auto albedo_path = fs::path(dir) / "gt" / "albedo" / detail::frame_name(idx, "pfm");
    if (fs::exists(albedo_path)) {
      ds.gt_albedo.push_back(read_pfm<T>(albedo_path.string()));
      ds.gt_rough.push_back(
          read_pfm<T>((fs::path(dir) / "gt" / "rough" / detail::frame_name(idx, "pfm")).string()));
      ds.gt_normal.push_back(read_pfm<T>(
          (fs::path(dir) / "gt" / "normal" / detail::frame_name(idx, "pfm")).string()));
    }
  }
  auto env_path = fs::path(dir) / "gt" / "env.pfm";
  if (fs::exists(env_path)) {
    ds.gt_env = read_envmap_pfm<T>(env_path.string());
    ds.has_gt_env = true;
  }

  auto labels_path = fs::path(dir) / "labels.json";
  if (fs::exists(labels_path)) {
    nlohmann::json labels;
    std::ifstream(labels_path) >> labels;
    ds.suggested_scale = labels.value("suggested_scale", 0.05);
    if (labels.contains("points")) {
      for (const auto& p : labels["points"])
        ds.init_points.push_back({T(p[0]), T(p[1]), T(p[2])});
      for (const auto& p : labels["normals"])
        ds.init_normals.push_back({T(p[0]), T(p[1]), T(p[2])});
      for (const auto& d : labels["point_dynamic"])
        ds.init_dynamic.push_back(static_cast<uint8_t>(d.get<int>()));
    }
  }
  return ds;
}

}  // namespace lumikit
