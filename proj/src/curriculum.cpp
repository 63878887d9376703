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

#include "ccop/curriculum.hpp"

#include <stdexcept>

#include "ccop/rng.hpp"

namespace ccop {

CurriculumState CurriculumState::from(const Config& cfg,
                                      int64_t total_iters) {
  CurriculumState s;
  s.total_iters = std::max<int64_t>(1, total_iters);
  s.zeta_start = cfg.get_double("curriculum.zeta_start");
  s.zeta_end = cfg.get_double("curriculum.zeta_end");
  s.beta_start = cfg.get_double("curriculum.beta_start");
  s.beta_end = cfg.get_double("curriculum.beta_end");
  s.candidates = static_cast<int>(cfg.get_int("curriculum.candidates"));
  s.max_attempts = static_cast<int>(cfg.get_int("curriculum.max_attempts"));
  s.enabled = cfg.get_bool("curriculum.enabled");
  if (s.zeta_start > s.zeta_end)
    throw std::invalid_argument("curriculum: zeta_start > zeta_end");
  if (s.beta_start < s.beta_end)
    throw std::invalid_argument("curriculum: beta_start < beta_end");
  if (s.candidates < 1 || s.max_attempts < 1)
    throw std::invalid_argument("curriculum: K and R must be >= 1");
  return s;
}

double zeta_at(const CurriculumState& s) {
  const double frac = static_cast<double>(s.t) / s.total_iters;
  return s.zeta_start + frac * (s.zeta_end - s.zeta_start);
}

double beta_at(const CurriculumState& s) {
  const double frac = static_cast<double>(s.t) / s.total_iters;
  return s.beta_start + frac * (s.beta_end - s.beta_start);
}

std::vector<Box> sample_candidates(const Box& b, const CurriculumState& s,
                                   double view_w, double view_h,
                                   uint64_t rng_seed) {
  std::vector<Box> out;
  out.reserve(s.candidates);
  if (!s.enabled) {
    out.assign(s.candidates, b);
    return out;
  }
  const double zeta = zeta_at(s);
  const double beta = beta_at(s);
  Rng rng(rng_seed);
  for (int slot = 0; slot < s.candidates; ++slot) {
    Box chosen = b;  // fallback when every attempt is rejected
    for (int attempt = 0; attempt < s.max_attempts; ++attempt) {
      const JitterNoise n{rng.uniform(-zeta, zeta), rng.uniform(-zeta, zeta),
                          rng.uniform(-zeta, zeta), rng.uniform(-zeta, zeta)};
      const auto cand = clip_box(jitter_box(b, n), view_w, view_h);
      if (cand && iou(*cand, b) >= beta) {
        chosen = *cand;
        break;
      }
    }
    out.push_back(chosen);
  }
  return out;
}

int scs_select(const Eigen::VectorXd& z_q,
               const std::vector<Eigen::VectorXd>& candidates) {
  if (candidates.empty())
    throw std::invalid_argument("scs_select: no candidates");
  int best = 0;
  double best_sim = z_q.dot(candidates[0]);
  for (int i = 1; i < static_cast<int>(candidates.size()); ++i) {
    const double sim = z_q.dot(candidates[i]);
    if (sim < best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  return best;
}

}  // namespace ccop
