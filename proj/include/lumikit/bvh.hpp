// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lumikit/intersect.hpp"

namespace lumikit {

// Median-split BVH over splat bounding boxes. Traversal emits candidate splat
// indices; exact ray-splat tests happen at the call site.
template <typename T>
class SplatBvh {
 public:
  SplatBvh() = default;

  void build(const SplatScene<T>& scene, T sigmas) {
    size_t n = scene.size();
    prim_indices_.resize(n);
    std::iota(prim_indices_.begin(), prim_indices_.end(), 0);
    boxes_.resize(n);
    for (size_t i = 0; i < n; ++i)
      boxes_[i] = splat_aabb(scene.mu[i], scene.frame[i], scene.su[i], scene.sv[i], sigmas);
    nodes_.clear();
    nodes_.reserve(2 * n + 1);
    if (n > 0) build_node(0, static_cast<int>(n));
  }

  bool empty() const { return nodes_.empty(); }

  void candidates(const Ray<T>& ray, T tmax, std::vector<int32_t>& out) const {
    if (nodes_.empty()) return;
    Vec3<T> inv{T(1) / ray.dir.x, T(1) / ray.dir.y, T(1) / ray.dir.z};
    int stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (!node.box.hit_by(ray, inv, tmax)) continue;
      if (node.count > 0) {
        for (int i = 0; i < node.count; ++i) out.push_back(prim_indices_[node.first + i]);
      } else {
        stack[top++] = node.first;
        stack[top++] = node.right;
      }
    }
  }

 private:
  struct Node {
    Aabb<T> box;
    int32_t first = 0;  // left child (inner) or primitive offset (leaf)
    int32_t right = 0;  // right child (inner only)
    int32_t count = 0;  // primitives in leaf, 0 for inner nodes
  };

  static constexpr int kLeafSize = 4;

  int build_node(int begin, int end) {
    Node node;
    for (int i = begin; i < end; ++i) node.box.expand(boxes_[prim_indices_[i]]);
    int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      nodes_[idx].first = begin;
      nodes_[idx].count = end - begin;
      return idx;
    }
    Vec3<T> extent = node.box.hi - node.box.lo;
    int axis = 0;
    if (extent.y > extent.x) axis = 1;
    if (extent.z > extent[axis]) axis = 2;
    int mid = (begin + end) / 2;
    std::nth_element(prim_indices_.begin() + begin, prim_indices_.begin() + mid,
                     prim_indices_.begin() + end, [&](int32_t a, int32_t b) {
                       T ca = boxes_[a].lo[axis] + boxes_[a].hi[axis];
                       T cb = boxes_[b].lo[axis] + boxes_[b].hi[axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    int left = build_node(begin, mid);
    int right = build_node(mid, end);
    nodes_[idx].first = left;
    nodes_[idx].right = right;
    return idx;
  }

  std::vector<int32_t> prim_indices_;
  std::vector<Aabb<T>> boxes_;
  std::vector<Node> nodes_;
};

}  // namespace lumikit
