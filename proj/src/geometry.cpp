// Copyright 2026 CCOP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ccop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ccop {

bool Box::valid() const {
  return w > 0.0 && h > 0.0 && std::isfinite(x) && std::isfinite(y) &&
         std::isfinite(w) && std::isfinite(h);
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

Box jitter_box(const Box& b, const JitterNoise& n) {
  return Box{b.x + n.sx * b.w, b.y + n.sy * b.h, b.w * std::exp(n.sw),
             b.h * std::exp(n.sh)};
}

Box transform_box(const Box& b, const Box& crop, double out_w, double out_h,
                  bool hflip) {
  const double sx = out_w / crop.w;
  const double sy = out_h / crop.h;
  Box r{(b.x - crop.x) * sx, (b.y - crop.y) * sy, b.w * sx, b.h * sy};
  if (hflip) r.x = out_w - r.x - r.w;
  return r;
}

std::optional<Box> clip_box(const Box& b, double view_w, double view_h) {
  const double x1 = std::max(0.0, b.x);
  const double y1 = std::max(0.0, b.y);
  const double x2 = std::min(view_w, b.x2());
  const double y2 = std::min(view_h, b.y2());
  if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0) return std::nullopt;
  return Box{x1, y1, x2 - x1, y2 - y1};
}

double clipped_fraction(const Box& b, double view_w, double view_h) {
  auto c = clip_box(b, view_w, view_h);
  if (!c) return 1.0;
  return 1.0 - c->area() / b.area();
}

std::vector<Box> filter_boxes(const std::vector<Box>& boxes, double min_area,
                              double ratio_lo, double ratio_hi) {
  std::vector<Box> out;
  out.reserve(boxes.size());
  for (const Box& b : boxes) {
    const double ratio = b.w / b.h;
    if (b.area() >= min_area && ratio > ratio_lo && ratio < ratio_hi)
      out.push_back(b);
  }
  return out;
}

Box enclosing_box(const Box& a, const Box& b) {
  const double x1 = std::min(a.x, b.x);
  const double y1 = std::min(a.y, b.y);
  const double x2 = std::max(a.x2(), b.x2());
  const double y2 = std::max(a.y2(), b.y2());
  return Box{x1, y1, x2 - x1, y2 - y1};
}

namespace {

// Union-find over box indices.
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// One round: components of the iou > thresh graph -> enclosing boxes.
// Returns true if anything was merged.
bool merge_once(std::vector<Box>& boxes, double iou_thresh) {
  const int n = static_cast<int>(boxes.size());
  DisjointSet ds(n);
  bool merged = false;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (iou(boxes[i], boxes[j]) > iou_thresh) {
        ds.unite(i, j);
        merged = true;
      }
  if (!merged) return false;

  // Component representative is the smallest member index, so the output
  // order does not depend on the merge order.
  std::vector<Box> out;
  std::vector<int> rep_index(n, -1);
  for (int i = 0; i < n; ++i) {
    const int r = ds.find(i);
    if (rep_index[r] < 0) {
      rep_index[r] = static_cast<int>(out.size());
      out.push_back(boxes[i]);
    } else {
      out[rep_index[r]] = enclosing_box(out[rep_index[r]], boxes[i]);
    }
  }
  boxes = std::move(out);
  return true;
}

}  // namespace

std::vector<Box> merge_boxes(const std::vector<Box>& boxes, double iou_thresh) {
  std::vector<Box> out = boxes;
  while (merge_once(out, iou_thresh)) {
  }
  return out;
}

}  // namespace ccop
