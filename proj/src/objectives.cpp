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

#include "ccop/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace ccop {

LossConfig LossConfig::from(const Config& cfg) {
  LossConfig l;
  l.tau = cfg.get_double("loss.tau");
  l.alpha = cfg.get_double("loss.alpha");
  l.iou_disjoint = cfg.get_double("loss.iou_disjoint");
  l.w_img = cfg.get_double("loss.w_img");
  l.w_obj = cfg.get_double("loss.w_obj");
  l.w_intra = cfg.get_double("loss.w_intra");
  l.queue_capacity = cfg.get_int("loss.queue_capacity");
  if (l.tau <= 0.0) throw std::invalid_argument("loss.tau must be > 0");
  return l;
}

MemoryQueue::MemoryQueue(int64_t capacity, int dim)
    : capacity_(capacity), dim_(dim) {
  if (capacity < 1) throw std::invalid_argument("queue capacity must be >= 1");
}

void MemoryQueue::push(const Vec& v) {
  if (v.size() != dim_)
    throw std::invalid_argument("queue push: dimension mismatch");
  if (std::abs(v.norm() - 1.0) > 1e-3)
    throw std::invalid_argument("queue push: embedding is not unit-norm");
  entries_.push_back(v);
  while (static_cast<int64_t>(entries_.size()) > capacity_)
    entries_.pop_front();
}

void MemoryQueue::push(const std::vector<Vec>& batch) {
  for (const Vec& v : batch) push(v);
}

namespace {

// Shared core: log-sum-exp style accumulation with the positive logit as
// the common scale, so large |s/tau| cannot overflow.
struct NceTerms {
  double pos_logit = 0.0;       // zq.zk / tau
  double sum_exp_rel = 0.0;     // sum_i exp((s_i - s_pos)/1) over negatives
  std::vector<double> exp_rel;  // per negative, relative to the positive
};

NceTerms nce_terms(const Vec& z_q, const Vec& z_k, const std::deque<Vec>& negs,
                   double tau, bool keep_each) {
  NceTerms t;
  t.pos_logit = z_q.dot(z_k) / tau;
  if (keep_each) t.exp_rel.reserve(negs.size());
  for (const Vec& zn : negs) {
    const double e = std::exp(z_q.dot(zn) / tau - t.pos_logit);
    t.sum_exp_rel += e;
    if (keep_each) t.exp_rel.push_back(e);
  }
  return t;
}

}  // namespace

double info_nce(const Vec& z_q, const Vec& z_k, const std::deque<Vec>& negs,
                double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be > 0");
  const NceTerms t = nce_terms(z_q, z_k, negs, tau, false);
  return std::log1p(t.sum_exp_rel);
}

InfoNceResult info_nce_with_grad(const Vec& z_q, const Vec& z_k,
                                 const std::deque<Vec>& negs, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be > 0");
  const NceTerms t = nce_terms(z_q, z_k, negs, tau, true);
  InfoNceResult r;
  r.loss = std::log1p(t.sum_exp_rel);
  const double denom = 1.0 + t.sum_exp_rel;
  r.negative_mass = t.sum_exp_rel / denom;
  // dL/dz_q = (1/tau) * [ sum_i p_i z_i^- - (1 - p_pos) z_k ]
  r.dz_q = Vec::Zero(z_q.size());
  size_t i = 0;
  for (const Vec& zn : negs) {
    const double p = t.exp_rel[i++] / denom;
    r.dz_q += p * zn;
  }
  r.dz_q -= r.negative_mass * z_k;
  r.dz_q /= tau;
  r.dz_k = (-r.negative_mass / tau) * z_q;
  return r;
}

double total_loss(double l_img, double l_obj, double l_intra, double w_img,
                  double w_obj, double w_intra) {
  return w_img * l_img + w_obj * l_obj + w_intra * l_intra;
}

double intra_image_loss(const std::vector<Box>& boxes,
                        const std::vector<Vec>& embeddings, double alpha,
                        double iou_disjoint) {
  std::vector<Vec> unused;
  return intra_image_loss_with_grad(boxes, embeddings, alpha, iou_disjoint,
                                    unused);
}

double intra_image_loss_with_grad(const std::vector<Box>& boxes,
                                  const std::vector<Vec>& embeddings,
                                  double alpha, double iou_disjoint,
                                  std::vector<Vec>& grads) {
  if (boxes.size() != embeddings.size())
    throw std::invalid_argument("intra_image_loss: boxes/embeddings mismatch");
  const int n = static_cast<int>(boxes.size());
  const bool want_grads = !grads.empty();
  if (want_grads && grads.size() != boxes.size())
    throw std::invalid_argument("intra_image_loss: grads size mismatch");
  if (n < 2) return 0.0;

  // First pass: count qualifying ordered pairs (the L1 norm of P).
  int64_t p_count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && iou(boxes[i], boxes[j]) < iou_disjoint) ++p_count;
  if (p_count == 0) return 0.0;

  double loss = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j || iou(boxes[i], boxes[j]) >= iou_disjoint) continue;
      const double margin = embeddings[i].dot(embeddings[j]) - alpha;
      if (margin <= 0.0) continue;
      loss += margin;
      if (want_grads) {
        grads[i] += embeddings[j] / static_cast<double>(p_count);
        grads[j] += embeddings[i] / static_cast<double>(p_count);
      }
    }
  return loss / static_cast<double>(p_count);
}

Vec contrastive_grad(const Vec& z_q, const Vec& z_k,
                     const std::vector<Vec>& negs) {
  const double pos = z_q.dot(z_k);
  double denom = std::exp(pos);
  Vec num = Vec::Zero(z_q.size());
  for (const Vec& zn : negs) {
    const double e = std::exp(z_q.dot(zn));
    num += e * (zn - z_k);
    denom += e;
  }
  return num / denom;
}

Vec approx_grad(const Vec& z_q, const Vec& z_k, const std::vector<Vec>& negs) {
  if (negs.empty()) throw std::invalid_argument("approx_grad: M must be >= 1");
  Vec mean = Vec::Zero(z_q.size());
  for (const Vec& zn : negs) mean += zn;
  mean /= static_cast<double>(negs.size());
  return (z_q - z_k) + (mean - z_q);
}

}  // namespace ccop
