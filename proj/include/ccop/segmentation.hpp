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

#ifndef CCOP_SEGMENTATION_HPP_
#define CCOP_SEGMENTATION_HPP_

#include <vector>

#include "ccop/image.hpp"

namespace ccop {

/// Per-pixel segment labels in a contiguous range [0, num_segments).
struct SegmentMap {
  int width = 0;
  int height = 0;
  int num_segments = 0;
  std::vector<int> labels;  // row-major, one per pixel

  int label(int y, int x) const {
    return labels[static_cast<size_t>(y) * width + x];
  }
};

/// Graph-based segmentation: 8-connected edges weighted by Euclidean color
/// distance (on a 0..255 scale), sorted ascending; components merge when the
/// edge weight does not exceed the smaller internal difference plus k/|C|.
/// Components below min_size are then merged across their cheapest boundary
/// edge. Rejects empty images.
SegmentMap segment_graph(const Image& image, double k, double sigma,
                         int min_size);

}  // namespace ccop

#endif  // CCOP_SEGMENTATION_HPP_
