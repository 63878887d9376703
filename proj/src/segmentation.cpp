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

#include "ccop/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ccop {

namespace {

struct Edge {
  float w;
  int a, b;
};

struct Forest {
  std::vector<int> parent, rank_;
  std::vector<int> size;
  explicit Forest(int n) : parent(n), rank_(n, 0), size(n, 1) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int i) {
    int root = i;
    while (parent[root] != root) root = parent[root];
    while (parent[i] != root) {
      const int next = parent[i];
      parent[i] = root;
      i = next;
    }
    return root;
  }
  int join(int a, int b) {
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
    if (rank_[a] == rank_[b]) ++rank_[a];
    return a;
  }
};

inline float color_dist(const Image& img, int pa, int pb) {
  const float* a = img.data.data() + static_cast<size_t>(pa) * 3;
  const float* b = img.data.data() + static_cast<size_t>(pb) * 3;
  const float d0 = (a[0] - b[0]) * 255.f;
  const float d1 = (a[1] - b[1]) * 255.f;
  const float d2 = (a[2] - b[2]) * 255.f;
  return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

}  // namespace

SegmentMap segment_graph(const Image& image, double k, double sigma,
                         int min_size) {
  if (image.empty()) throw std::invalid_argument("segment_graph: empty image");
  if (k <= 0.0) throw std::invalid_argument("segment_graph: k must be > 0");
  if (min_size < 1)
    throw std::invalid_argument("segment_graph: min_size must be >= 1");

  const Image smooth = sigma > 0.0 ? gaussian_blur(image, sigma) : image;
  const int w = image.width, h = image.height;
  const int n = w * h;

  std::vector<Edge> edges;
  edges.reserve(static_cast<size_t>(n) * 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w)
        edges.push_back({color_dist(smooth, p, p + 1), p, p + 1});
      if (y + 1 < h)
        edges.push_back({color_dist(smooth, p, p + w), p, p + w});
      if (x + 1 < w && y + 1 < h)
        edges.push_back({color_dist(smooth, p, p + w + 1), p, p + w + 1});
      if (x + 1 < w && y > 0)
        edges.push_back({color_dist(smooth, p, p - w + 1), p, p - w + 1});
    }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.w != b.w) return a.w < b.w;
    if (a.a != b.a) return a.a < b.a;
    return a.b < b.b;
  });

  Forest forest(n);
  std::vector<float> threshold(n, static_cast<float>(k));
  for (const Edge& e : edges) {
    int ra = forest.find(e.a);
    int rb = forest.find(e.b);
    if (ra == rb) continue;
    if (e.w <= threshold[ra] && e.w <= threshold[rb]) {
      const int r = forest.join(ra, rb);
      threshold[r] = e.w + static_cast<float>(k / forest.size[r]);
    }
  }

  // Merge undersized components across their cheapest boundary edge (edges
  // are still sorted by weight).
  for (const Edge& e : edges) {
    const int ra = forest.find(e.a);
    const int rb = forest.find(e.b);
    if (ra != rb &&
        (forest.size[ra] < min_size || forest.size[rb] < min_size))
      forest.join(ra, rb);
  }

  SegmentMap seg;
  seg.width = w;
  seg.height = h;
  seg.labels.resize(n);
  std::vector<int> remap(n, -1);
  int next = 0;
  for (int p = 0; p < n; ++p) {
    const int r = forest.find(p);
    if (remap[r] < 0) remap[r] = next++;
    seg.labels[p] = remap[r];
  }
  seg.num_segments = next;
  return seg;
}

}  // namespace ccop
