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

#ifndef CCOP_GEOMETRY_HPP_
#define CCOP_GEOMETRY_HPP_

#include <optional>
#include <vector>

namespace ccop {

/// Axis-aligned box in pixel units, top-left origin. Coordinates are
/// real-valued (sub-pixel); rounding happens only at file export.
struct Box {
  double x = 0.0;  // left edge
  double y = 0.0;  // top edge
  double w = 0.0;
  double h = 0.0;

  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double area() const { return w * h; }
  bool valid() const;

  bool operator==(const Box& o) const = default;
};

/// Multiplicative/shift noise applied to a box. Each coefficient is drawn
/// uniformly from (-zeta, zeta) by the curriculum module.
struct JitterNoise {
  double sx = 0.0;
  double sy = 0.0;
  double sw = 0.0;
  double sh = 0.0;
};

/// Intersection-over-union of two valid boxes. Symmetric, in [0, 1],
/// 0 when disjoint.
double iou(const Box& a, const Box& b);

/// x' = sx*w + x, y' = sy*h + y, w' = w*exp(sw), h' = h*exp(sh).
/// The result is not clipped; callers clip when they need to.
Box jitter_box(const Box& b, const JitterNoise& n);

/// Maps a box from original-image coordinates into the coordinates of the
/// view obtained by resizing `crop` to (out_w, out_h), mirroring if `hflip`.
/// The result is not clipped.
Box transform_box(const Box& b, const Box& crop, double out_w, double out_h,
                  bool hflip);

/// Intersection of `b` with the rectangle [0,w]x[0,h], or nullopt when the
/// intersection has no area.
std::optional<Box> clip_box(const Box& b, double view_w, double view_h);

/// Fraction of the box area lost when clipping it to a view of the given
/// size: 1 - area(b ∩ view) / area(b).
double clipped_fraction(const Box& b, double view_w, double view_h);

/// Keeps boxes with w*h >= min_area and ratio_lo < w/h < ratio_hi,
/// preserving input order.
std::vector<Box> filter_boxes(const std::vector<Box>& boxes,
                              double min_area = 144.0, double ratio_lo = 0.33,
                              double ratio_hi = 3.0);

/// Merges boxes whose IoU exceeds `iou_thresh`: connected components under
/// the iou > thresh relation are replaced by their enclosing box, repeated
/// until no pair exceeds the threshold. Output order follows the smallest
/// input index contained in each component.
std::vector<Box> merge_boxes(const std::vector<Box>& boxes,
                             double iou_thresh = 0.5);

/// Smallest box containing both inputs.
Box enclosing_box(const Box& a, const Box& b);

}  // namespace ccop

#endif  // CCOP_GEOMETRY_HPP_
