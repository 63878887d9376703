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

#ifndef CCOP_PROPOSALS_HPP_
#define CCOP_PROPOSALS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ccop/config.hpp"
#include "ccop/geometry.hpp"
#include "ccop/image.hpp"
#include "ccop/segmentation.hpp"

namespace ccop {

struct Proposal {
  int object_id = 0;
  Box box;
};

/// Per-image proposal list with stable identifiers (the 0-based index in
/// the proposals file).
struct ProposalSet {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Proposal> proposals;
};

struct ProposalConfig {
  double k = 200.0;
  double sigma = 0.8;
  int min_size = 50;
  double merge_iou = 0.5;
  double min_area = 144.0;
  double ratio_lo = 0.33;
  double ratio_hi = 3.0;
  int max_boxes = 32;

  static ProposalConfig from(const Config& cfg);
};

/// Selective-search region merging over an initial segmentation: greedy
/// merges of the most similar adjacent regions (color histogram
/// intersection + size + fill), recording the bounding box of every region
/// ever created. Returns 2 * num_segments - 1 boxes.
std::vector<Box> hierarchical_merge(const SegmentMap& seg, const Image& image);

/// Full pipeline: segment_graph -> hierarchical_merge -> merge_boxes ->
/// filter_boxes -> keep the max_boxes largest; ids are sequential.
ProposalSet propose_boxes(const Image& image, const ProposalConfig& cfg,
                          const std::string& image_id = "");

/// Baseline generator: uniform boxes inside the image that pass the same
/// area/aspect filters; deterministic for a fixed seed. May return fewer
/// than `count` boxes if the attempt cap is hit.
ProposalSet random_boxes(int image_w, int image_h, int count,
                         uint64_t rng_seed, const ProposalConfig& cfg = {});

}  // namespace ccop

#endif  // CCOP_PROPOSALS_HPP_
