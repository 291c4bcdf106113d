// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lumikit/envmap.hpp"
#include "lumikit/image.hpp"
#include "lumikit/ssim.hpp"

namespace lumikit {

inline constexpr double kPsnrCap = 99.0;

template <typename T>
inline T mse(const ImageBuffer<T>& a, const ImageBuffer<T>& b) {
  if (a.data.size() != b.data.size()) throw std::invalid_argument("mse: dimensions differ");
  T sum = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    T d = a.data[i] - b.data[i];
    sum += d * d;
  }
  return sum / T(a.data.size());
}

// Peak 1.0, capped at 99 dB for identical images.
template <typename T>
inline T psnr(const ImageBuffer<T>& a, const ImageBuffer<T>& b) {
  T m = mse(a, b);
  if (m <= T(0)) return T(kPsnrCap);
  return std::min(T(kPsnrCap), T(10) * std::log10(T(1) / m));
}

// Least-squares per-channel scale of pred onto gt over masked pixels.
template <typename T>
inline Vec3<T> albedo_alignment_scale(const ImageBuffer<T>& pred, const ImageBuffer<T>& gt,
                                      const std::vector<uint8_t>& mask) {
  Vec3<T> num{}, den{};
  for (size_t px = 0; px < mask.size(); ++px) {
    if (!mask[px]) continue;
    for (int c = 0; c < 3; ++c) {
      T p = pred.data[px * 3 + c], g = gt.data[px * 3 + c];
      num[c] += p * g;
      den[c] += p * p;
    }
  }
  Vec3<T> s;
  for (int c = 0; c < 3; ++c) s[c] = den[c] > T(1e-12) ? num[c] / den[c] : T(1);
  return s;
}

template <typename T>
struct MetricRecord {
  T psnr = 0, ssim = 0, mse = 0;
  // albedo only: metrics after per-channel scale alignment
  bool has_aligned = false;
  T psnr_aligned = 0, ssim_aligned = 0, mse_aligned = 0;
  // envmap only: angular distance between dominant-light directions
  bool has_angular = false;
  T dominant_angle_deg = 0;
};

template <typename T>
inline MetricRecord<T> eval_image_metrics(const ImageBuffer<T>& pred, const ImageBuffer<T>& gt) {
  MetricRecord<T> rec;
  rec.mse = mse(pred, gt);
  rec.psnr = psnr(pred, gt);
  rec.ssim = ssim(pred, gt);
  return rec;
}

// kind = albedo: reports raw and scale-aligned variants (the mask restricts
// the alignment fit and is mandatory).
template <typename T>
inline MetricRecord<T> eval_albedo_metrics(const ImageBuffer<T>& pred, const ImageBuffer<T>& gt,
                                           const std::vector<uint8_t>& mask) {
  MetricRecord<T> rec = eval_image_metrics(pred, gt);
  Vec3<T> s = albedo_alignment_scale(pred, gt, mask);
  ImageBuffer<T> aligned = pred;
  for (size_t px = 0; px < mask.size(); ++px)
    for (int c = 0; c < 3; ++c) aligned.data[px * 3 + c] *= s[c];
  // metrics over the foreground only: zero both images outside the mask
  ImageBuffer<T> gt_fg = gt;
  for (size_t px = 0; px < mask.size(); ++px)
    if (!mask[px])
      for (int c = 0; c < 3; ++c) aligned.data[px * 3 + c] = gt_fg.data[px * 3 + c] = 0;
  rec.has_aligned = true;
  rec.mse_aligned = mse(aligned, gt_fg);
  rec.psnr_aligned = psnr(aligned, gt_fg);
  rec.ssim_aligned = ssim(aligned, gt_fg);
  return rec;
}

template <typename T>
inline MetricRecord<T> eval_envmap_metrics(const EnvironmentMap<T>& pred,
                                           const EnvironmentMap<T>& gt) {
  MetricRecord<T> rec = eval_image_metrics(pred.to_image(), gt.to_image());
  rec.has_angular = true;
  T d = std::clamp(dot(pred.dominant_direction(), gt.dominant_direction()), T(-1), T(1));
  rec.dominant_angle_deg = std::acos(d) * T(180) / T(M_PI);
  return rec;
}

template <typename T>
struct MetricAggregate {
  T mean = 0, stddev = 0;
};

template <typename T>
inline MetricAggregate<T> aggregate(const std::vector<T>& values) {
  MetricAggregate<T> a;
  if (values.empty()) return a;
  for (T v : values) a.mean += v;
  a.mean /= T(values.size());
  for (T v : values) a.stddev += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(a.stddev / T(values.size()));
  return a;
}

}  // namespace lumikit
