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

#ifndef CCOP_CURRICULUM_HPP_
#define CCOP_CURRICULUM_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ccop/config.hpp"
#include "ccop/geometry.hpp"

namespace ccop {

/// Spatial-noise curriculum: the jitter magnitude zeta grows linearly over
/// training while the candidate IoU floor beta_t drops, so positive pairs
/// get harder as the model gets stronger.
struct CurriculumState {
  int64_t t = 0;
  int64_t total_iters = 1;
  double zeta_start = 0.3;
  double zeta_end = 1.0;
  double beta_start = 0.8;
  double beta_end = 0.3;
  int candidates = 4;     // K: jittered candidates per box
  int max_attempts = 20;  // R: rejections before the unjittered fallback
  bool enabled = true;

  static CurriculumState from(const Config& cfg, int64_t total_iters);
};

/// Linear in t: zeta_start at t=0, zeta_end at t=T.
double zeta_at(const CurriculumState& s);

/// Linear in t: beta_start at t=0, beta_end at t=T.
double beta_at(const CurriculumState& s);

/// Draws K jittered candidates for `b`: each coefficient uniform in
/// (-zeta, zeta), clipped to the view, accepted when iou(candidate, b) >=
/// beta_t (inclusive, documented choice). Up to R rejection attempts per
/// slot, falling back to the unjittered box, so exactly K boxes come back.
/// When the curriculum is disabled every candidate is the unjittered box.
std::vector<Box> sample_candidates(const Box& b, const CurriculumState& s,
                                   double view_w, double view_h,
                                   uint64_t rng_seed);

/// Index of the candidate embedding least similar to z_q (the hardest box);
/// ties break toward the lowest index. Throws on an empty list.
int scs_select(const Eigen::VectorXd& z_q,
               const std::vector<Eigen::VectorXd>& candidates);

}  // namespace ccop

#endif  // CCOP_CURRICULUM_HPP_
