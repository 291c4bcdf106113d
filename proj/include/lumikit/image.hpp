// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumikit/math.hpp"

namespace lumikit {

// Row-major float image, 1 or 3 interleaved channels, row 0 at the top.
template <typename T>
struct ImageBuffer {
  int width = 0, height = 0, channels = 0;
  std::vector<T> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c) : width(w), height(h), channels(c) {
    if (c != 1 && c != 3) throw std::invalid_argument("ImageBuffer: channels must be 1 or 3");
    data.assign(static_cast<size_t>(w) * h * c, T(0));
  }

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  T* at(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * channels; }
  const T* at(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }

  Vec3<T> rgb(int x, int y) const {
    const T* p = at(x, y);
    return channels == 3 ? Vec3<T>{p[0], p[1], p[2]} : Vec3<T>{p[0], p[0], p[0]};
  }

  void set_rgb(int x, int y, const Vec3<T>& v) {
    T* p = at(x, y);
    if (channels == 3) {
      p[0] = v.x;
      p[1] = v.y;
      p[2] = v.z;
    } else {
      p[0] = v.x;
    }
  }

  template <typename U>
  ImageBuffer<U> cast() const {
    ImageBuffer<U> out(width, height, channels);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

namespace detail {

inline bool host_is_little_endian() {
  uint16_t probe = 1;
  uint8_t first;
  std::memcpy(&first, &probe, 1);
  return first == 1;
}

inline void skip_pnm_whitespace(std::istream& in) {
  int c = in.peek();
  while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    c = in.peek();
  }
}

}  // namespace detail

// -----------------------------------------------------------------------------
// PFM (float images, little-endian, scale -1.0, rows bottom-up per convention)
// -----------------------------------------------------------------------------

template <typename T>
inline void write_pfm(const ImageBuffer<T>& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pfm: cannot open " + path);
  out << (img.channels == 3 ? "PF" : "Pf") << "\n";
  out << img.width << " " << img.height << "\n";
  out << "-1.0\n";
  std::vector<float> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    const T* src = img.at(0, y);
    for (size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(src[i]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write_pfm: write failed for " + path);
}

template <typename T = float>
inline ImageBuffer<T> read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pfm: cannot open " + path);
  std::string magic;
  in >> magic;
  int channels;
  if (magic == "PF")
    channels = 3;
  else if (magic == "Pf")
    channels = 1;
  else
    throw std::runtime_error("read_pfm: bad magic in " + path);
  int w, h;
  double scale;
  in >> w >> h >> scale;
  in.get();  // single whitespace after header
  if (w <= 0 || h <= 0) throw std::runtime_error("read_pfm: bad dimensions in " + path);
  bool file_little = scale < 0;
  ImageBuffer<T> img(w, h, channels);
  std::vector<float> row(static_cast<size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw std::runtime_error("read_pfm: truncated file " + path);
    if (file_little != detail::host_is_little_endian()) {
      for (float& f : row) {
        uint32_t v;
        std::memcpy(&v, &f, 4);
        v = __builtin_bswap32(v);
        std::memcpy(&f, &v, 4);
      }
    }
    T* dst = img.at(0, y);
    for (size_t i = 0; i < row.size(); ++i) dst[i] = static_cast<T>(row[i]);
  }
  return img;
}

// -----------------------------------------------------------------------------
// PPM / PGM previews
// -----------------------------------------------------------------------------

// Linear -> display with gamma 2.2.
template <typename T>
inline uint8_t to_srgb8(T v) {
  T c = std::pow(std::clamp(v, T(0), T(1)), T(1) / T(2.2));
  return static_cast<uint8_t>(std::lround(std::clamp(c, T(0), T(1)) * 255));
}

template <typename T>
inline void write_ppm(const ImageBuffer<T>& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      Vec3<T> c = img.rgb(x, y);
      uint8_t px[3] = {to_srgb8(c.x), to_srgb8(c.y), to_srgb8(c.z)};
      out.write(reinterpret_cast<const char*>(px), 3);
    }
}

// Binary mask as 8-bit PGM (0 or 255).
inline void write_pgm_mask(const std::vector<uint8_t>& mask, int w, int h,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm_mask: cannot open " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  for (size_t i = 0; i < mask.size(); ++i) {
    uint8_t v = mask[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(&v), 1);
  }
}

inline std::vector<uint8_t> read_pgm_mask(const std::string& path, int& w, int& h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm_mask: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm_mask: bad magic in " + path);
  detail::skip_pnm_whitespace(in);
  int maxval;
  in >> w;
  detail::skip_pnm_whitespace(in);
  in >> h;
  detail::skip_pnm_whitespace(in);
  in >> maxval;
  in.get();
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw std::runtime_error("read_pgm_mask: truncated file " + path);
  for (auto& v : raw) v = v >= maxval / 2 ? 1 : 0;
  return raw;
}

}  // namespace lumikit
