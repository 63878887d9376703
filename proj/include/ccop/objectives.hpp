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

#ifndef CCOP_OBJECTIVES_HPP_
#define CCOP_OBJECTIVES_HPP_

#include <Eigen/Dense>
#include <deque>
#include <optional>
#include <vector>

#include "ccop/config.hpp"
#include "ccop/geometry.hpp"

namespace ccop {

using Vec = Eigen::VectorXd;

struct LossConfig {
  double tau = 0.2;
  double alpha = 0.4;
  double iou_disjoint = 0.05;
  double w_img = 1.0;
  double w_obj = 1.0;
  double w_intra = 1.0;
  int64_t queue_capacity = 65335;

  static LossConfig from(const Config& cfg);
};

/// Fixed-capacity FIFO of unit-norm embeddings; eviction is strictly
/// oldest-first. Single writer, any number of readers.
class MemoryQueue {
 public:
  MemoryQueue(int64_t capacity, int dim);

  /// Appends embeddings in order; rejects vectors whose norm deviates from 1
  /// by more than 1e-3.
  void push(const std::vector<Vec>& batch);
  void push(const Vec& v);

  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  int64_t capacity() const { return capacity_; }
  int dim() const { return dim_; }

  /// All current entries, oldest first. The view is read-only; stored
  /// vectors never participate in gradients.
  const std::deque<Vec>& negatives() const { return entries_; }

 private:
  int64_t capacity_;
  int dim_;
  std::deque<Vec> entries_;
};

/// -log( exp(zq.zk/tau) / (exp(zq.zk/tau) + sum_i exp(zq.zi^-/tau)) ).
/// Negatives may be empty. Throws if tau <= 0.
double info_nce(const Vec& z_q, const Vec& z_k, const std::deque<Vec>& negs,
                double tau);

/// Value plus the analytic gradients wrt z_q and z_k (both treated as free
/// vectors; negatives receive no gradient).
struct InfoNceResult {
  double loss = 0.0;
  Vec dz_q;
  Vec dz_k;
  /// Softmax mass carried by the negatives; this is also the norm of the
  /// z_k-dependent gradient component for unit-norm z_k.
  double negative_mass = 0.0;
};
InfoNceResult info_nce_with_grad(const Vec& z_q, const Vec& z_k,
                                 const std::deque<Vec>& negs, double tau);

/// Hinge loss over pairs of non-overlapping boxes within one image:
/// (1/|P|) sum_{i != j} P_ij * max(z_i.z_j - alpha, 0), with P_ij = 1 iff
/// iou(B_i, B_j) < iou_disjoint. Returns 0 when no pair qualifies.
double intra_image_loss(const std::vector<Box>& boxes,
                        const std::vector<Vec>& embeddings, double alpha,
                        double iou_disjoint = 0.05);

/// Same, with gradients wrt each embedding appended to `grads` (grads must
/// be pre-sized and zeroed or accumulated by the caller).
double intra_image_loss_with_grad(const std::vector<Box>& boxes,
                                  const std::vector<Vec>& embeddings,
                                  double alpha, double iou_disjoint,
                                  std::vector<Vec>& grads);

/// Weighted combination of the three loss terms.
double total_loss(double l_img, double l_obj, double l_intra, double w_img,
                  double w_obj, double w_intra);

/// Exact gradient of info_nce(tau=1) wrt z_q:
/// sum_i (zi^- - z_k) exp(zq.zi^-) / (exp(zq.zk) + sum_i exp(zq.zi^-)).
Vec contrastive_grad(const Vec& z_q, const Vec& z_k,
                     const std::vector<Vec>& negs);

/// Late-training approximation: (z_q - z_k) + (1/M) sum_i (zi^- - z_q),
/// which reduces to mean(z^-) - z_k. Throws when M = 0.
Vec approx_grad(const Vec& z_q, const Vec& z_k, const std::vector<Vec>& negs);

}  // namespace ccop

#endif  // CCOP_OBJECTIVES_HPP_
