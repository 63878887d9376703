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

#include "ccop/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "ccop/rng.hpp"

namespace ccop {

ProposalConfig ProposalConfig::from(const Config& cfg) {
  ProposalConfig p;
  p.k = cfg.get_double("proposals.k");
  p.sigma = cfg.get_double("proposals.sigma");
  p.min_size = static_cast<int>(cfg.get_int("proposals.min_size"));
  p.merge_iou = cfg.get_double("proposals.merge_iou");
  p.min_area = cfg.get_double("proposals.min_area");
  p.ratio_lo = cfg.get_double("proposals.ratio_lo");
  p.ratio_hi = cfg.get_double("proposals.ratio_hi");
  p.max_boxes = static_cast<int>(cfg.get_int("proposals.max_boxes"));
  return p;
}

namespace {

constexpr int kBins = 25;  // per channel, HSV

struct Region {
  double size = 0;
  int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
  std::vector<float> hist;  // 3 * kBins, L1-normalized over all bins

  Box bbox() const {
    return Box{static_cast<double>(min_x), static_cast<double>(min_y),
               static_cast<double>(max_x - min_x + 1),
               static_cast<double>(max_y - min_y + 1)};
  }
};

double similarity(const Region& a, const Region& b, double image_size) {
  double s_color = 0.0;
  for (int i = 0; i < 3 * kBins; ++i)
    s_color += std::min(a.hist[i], b.hist[i]);
  const double s_size = 1.0 - (a.size + b.size) / image_size;
  const Box bb = enclosing_box(a.bbox(), b.bbox());
  const double s_fill = 1.0 - (bb.area() - a.size - b.size) / image_size;
  return s_color + s_size + s_fill;
}

}  // namespace

std::vector<Box> hierarchical_merge(const SegmentMap& seg,
                                    const Image& image) {
  if (seg.width != image.width || seg.height != image.height)
    throw std::invalid_argument("hierarchical_merge: segmentation/image size "
                                "mismatch");
  const int n0 = seg.num_segments;
  const double image_size =
      static_cast<double>(seg.width) * seg.height;

  std::map<int, Region> regions;
  for (int i = 0; i < n0; ++i) regions[i].hist.assign(3 * kBins, 0.f);

  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      Region& r = regions[seg.label(y, x)];
      r.size += 1;
      r.min_x = std::min(r.min_x, x);
      r.min_y = std::min(r.min_y, y);
      r.max_x = std::max(r.max_x, x);
      r.max_y = std::max(r.max_y, y);
      const auto hsv =
          rgb_to_hsv(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2));
      for (int c = 0; c < 3; ++c) {
        int bin = static_cast<int>(hsv[c] * kBins);
        bin = std::clamp(bin, 0, kBins - 1);
        r.hist[c * kBins + bin] += 1.f;
      }
    }
  for (auto& [id, r] : regions) {
    const float total = static_cast<float>(r.size) * 3.f;
    for (float& v : r.hist) v /= total;
  }

  // Adjacency from 8-connected label boundaries.
  std::set<std::pair<int, int>> adjacent;
  auto note = [&](int a, int b) {
    if (a != b) adjacent.insert({std::min(a, b), std::max(a, b)});
  };
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      const int l = seg.label(y, x);
      if (x + 1 < seg.width) note(l, seg.label(y, x + 1));
      if (y + 1 < seg.height) note(l, seg.label(y + 1, x));
      if (x + 1 < seg.width && y + 1 < seg.height)
        note(l, seg.label(y + 1, x + 1));
      if (x + 1 < seg.width && y > 0) note(l, seg.label(y - 1, x + 1));
    }

  std::map<std::pair<int, int>, double> sims;
  for (const auto& pr : adjacent)
    sims[pr] = similarity(regions.at(pr.first), regions.at(pr.second),
                          image_size);

  std::vector<Box> boxes;
  boxes.reserve(2 * static_cast<size_t>(n0));
  for (int i = 0; i < n0; ++i) boxes.push_back(regions.at(i).bbox());

  int next_id = n0;
  while (!sims.empty()) {
    // Highest similarity wins; equal similarities break toward the smaller
    // (id_a, id_b) pair for reproducibility.
    auto best = sims.begin();
    for (auto it = std::next(sims.begin()); it != sims.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [ia, ib] = best->first;

    Region merged;
    const Region& ra = regions.at(ia);
    const Region& rb = regions.at(ib);
    merged.size = ra.size + rb.size;
    merged.min_x = std::min(ra.min_x, rb.min_x);
    merged.min_y = std::min(ra.min_y, rb.min_y);
    merged.max_x = std::max(ra.max_x, rb.max_x);
    merged.max_y = std::max(ra.max_y, rb.max_y);
    merged.hist.resize(3 * kBins);
    for (int i = 0; i < 3 * kBins; ++i)
      merged.hist[i] = static_cast<float>(
          (ra.hist[i] * ra.size + rb.hist[i] * rb.size) / merged.size);

    // Neighbors of the merged region = union of the parents' neighbors.
    std::set<int> neighbors;
    for (auto it = sims.begin(); it != sims.end();) {
      const auto [pa, pb] = it->first;
      if (pa == ia || pa == ib || pb == ia || pb == ib) {
        const int other = (pa == ia || pa == ib) ? pb : pa;
        if (other != ia && other != ib) neighbors.insert(other);
        it = sims.erase(it);
      } else {
        ++it;
      }
    }
    regions.erase(ia);
    regions.erase(ib);
    const int id = next_id++;
    regions.emplace(id, std::move(merged));
    boxes.push_back(regions.at(id).bbox());
    for (int nb : neighbors)
      sims[{std::min(nb, id), std::max(nb, id)}] =
          similarity(regions.at(nb), regions.at(id), image_size);
  }
  return boxes;
}

ProposalSet propose_boxes(const Image& image, const ProposalConfig& cfg,
                          const std::string& image_id) {
  const SegmentMap seg =
      segment_graph(image, cfg.k, cfg.sigma, cfg.min_size);
  std::vector<Box> boxes = hierarchical_merge(seg, image);
  boxes = merge_boxes(boxes, cfg.merge_iou);
  boxes = filter_boxes(boxes, cfg.min_area, cfg.ratio_lo, cfg.ratio_hi);
  if (cfg.max_boxes > 0 &&
      static_cast<int>(boxes.size()) > cfg.max_boxes) {
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const Box& a, const Box& b) {
                       return a.area() > b.area();
                     });
    boxes.resize(cfg.max_boxes);
  }
  ProposalSet out;
  out.image_id = image_id;
  out.width = image.width;
  out.height = image.height;
  for (int i = 0; i < static_cast<int>(boxes.size()); ++i)
    out.proposals.push_back({i, boxes[i]});
  return out;
}

ProposalSet random_boxes(int image_w, int image_h, int count,
                         uint64_t rng_seed, const ProposalConfig& cfg) {
  if (count < 0) throw std::invalid_argument("random_boxes: count < 0");
  ProposalSet out;
  out.width = image_w;
  out.height = image_h;
  Rng rng(rng_seed);
  const int max_attempts = std::max(1, count) * 100;
  int attempts = 0;
  while (static_cast<int>(out.proposals.size()) < count &&
         attempts < max_attempts) {
    ++attempts;
    const double w = rng.uniform(4.0, image_w);
    const double h = rng.uniform(4.0, image_h);
    const double x = rng.uniform(0.0, image_w - w);
    const double y = rng.uniform(0.0, image_h - h);
    const Box b{x, y, w, h};
    const double ratio = b.w / b.h;
    if (b.area() >= cfg.min_area && ratio > cfg.ratio_lo &&
        ratio < cfg.ratio_hi)
      out.proposals.push_back(
          {static_cast<int>(out.proposals.size()), b});
  }
  return out;
}

}  // namespace ccop
