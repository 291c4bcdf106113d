// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumikit/image.hpp"
#include "lumikit/math.hpp"

namespace lumikit {

// Lat-long HDR radiance grid, width = 2 * height, +z at row 0 (scene up).
// Lookups are nearest-texel; an optional azimuthal rotation is applied at
// lookup time.
template <typename T>
struct EnvironmentMap {
  int width = 0, height = 0;
  std::vector<Vec3<T>> texels;  // row-major
  T rotation = 0;               // radians, about +z

  EnvironmentMap() = default;
  EnvironmentMap(int w, int h, Vec3<T> fill = {}) : width(w), height(h) {
    if (w != 2 * h) throw std::invalid_argument("EnvironmentMap: width must be 2 * height");
    texels.assign(static_cast<size_t>(w) * h, fill);
  }

  size_t size() const { return texels.size(); }

  Vec3<T>& at(int row, int col) { return texels[static_cast<size_t>(row) * width + col]; }
  const Vec3<T>& at(int row, int col) const {
    return texels[static_cast<size_t>(row) * width + col];
  }

  // Equirectangular mapping: row from acos(w_z), col from atan2(w_y, w_x).
  void dir_to_texel(const Vec3<T>& w, int& row, int& col) const {
    T theta = std::acos(std::clamp(w.z, T(-1), T(1)));
    T phi = std::atan2(w.y, w.x) - rotation;
    phi = phi - T(2 * M_PI) * std::floor(phi / T(2 * M_PI));  // wrap to [0, 2pi)
    row = std::min(height - 1, static_cast<int>(theta / T(M_PI) * height));
    col = std::min(width - 1, static_cast<int>(phi / T(2 * M_PI) * width));
    row = std::max(row, 0);
    col = std::max(col, 0);
  }

  int texel_index(const Vec3<T>& w) const {
    int row, col;
    dir_to_texel(w, row, col);
    return row * width + col;
  }

  Vec3<T> texel_to_dir(int row, int col) const {
    T theta = (T(row) + T(0.5)) * T(M_PI) / height;
    T phi = (T(col) + T(0.5)) * T(2 * M_PI) / width + rotation;
    T st = std::sin(theta);
    return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
  }

  Vec3<T> lookup(const Vec3<T>& w) const { return texels[texel_index(w)]; }

  // Solid angle of any texel in the given row.
  T texel_solid_angle(int row) const {
    T t0 = T(row) * T(M_PI) / height;
    T t1 = T(row + 1) * T(M_PI) / height;
    return (std::cos(t0) - std::cos(t1)) * T(2 * M_PI) / width;
  }

  // Brightest texel (ties keep the first); the dominant-light direction.
  void argmax_texel(int& row, int& col) const {
    T best = T(-1);
    row = col = 0;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        T v = at(r, c).x + at(r, c).y + at(r, c).z;
        if (v > best) {
          best = v;
          row = r;
          col = c;
        }
      }
  }

  Vec3<T> dominant_direction() const {
    int r, c;
    argmax_texel(r, c);
    return texel_to_dir(r, c);
  }

  void clamp_nonnegative() {
    for (auto& t : texels) t = vmax(t, Vec3<T>{});
  }

  ImageBuffer<T> to_image() const {
    ImageBuffer<T> img(width, height, 3);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) img.set_rgb(c, r, at(r, c));
    return img;
  }

  static EnvironmentMap from_image(const ImageBuffer<T>& img) {
    EnvironmentMap env(img.width, img.height);
    for (int r = 0; r < img.height; ++r)
      for (int c = 0; c < img.width; ++c) env.at(r, c) = img.rgb(c, r);
    return env;
  }
};

template <typename T>
inline void write_envmap_pfm(const EnvironmentMap<T>& env, const std::string& path) {
  write_pfm(env.to_image(), path);
}

template <typename T>
inline EnvironmentMap<T> read_envmap_pfm(const std::string& path) {
  auto img = read_pfm<T>(path);
  if (img.channels != 3) throw std::runtime_error("read_envmap_pfm: expected 3 channels");
  if (img.width != 2 * img.height)
    throw std::runtime_error("read_envmap_pfm: expected 2:1 lat-long aspect in " + path);
  return EnvironmentMap<T>::from_image(img);
}

}  // namespace lumikit
