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

#ifndef CCOP_EVALKIT_HPP_
#define CCOP_EVALKIT_HPP_

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ccop/datapipe.hpp"
#include "ccop/network.hpp"
#include "ccop/objectives.hpp"

namespace ccop {

struct LabeledEmbedding {
  Vec vec;
  int label = -1;
  std::string image_id;
  Box box;
};

/// Mean over items of (same-class neighbours among the k nearest, excluding
/// the item itself) / k, under cosine similarity. Ties at identical
/// similarity break toward the lower insertion index. Requires unit-norm
/// vectors and at least k+1 items.
double knn_recall(const std::vector<LabeledEmbedding>& items, int k);

/// One image with its evaluation boxes (label -1 when unlabeled).
struct EvalItem {
  Image image;
  std::string image_id;
  std::vector<std::pair<int, Box>> objects;
};

/// Held-out synthetic scenes with ground-truth (oracle) boxes.
std::vector<EvalItem> synthetic_eval_items(uint64_t seed, int count,
                                           const SynthConfig& cfg);

enum class EmbeddingKind { kPrediction, kBackbone };

/// Embeds each item's boxes through a frozen encoder. kPrediction goes
/// through the object head (unit-norm, embed_dim); kBackbone returns the
/// raw pooled pre-MLP regional feature (fpn_channels wide).
std::vector<LabeledEmbedding> compute_embeddings(Encoder<float>& enc,
                                                 const std::vector<EvalItem>&
                                                     items,
                                                 EmbeddingKind kind,
                                                 const AugConfig& aug);

/// Line-delimited records {"image_id", "box", "label", "vec"}; vectors are
/// written at full precision so a round-trip is exact.
void save_embeddings(const std::vector<LabeledEmbedding>& items,
                     const std::string& path);
std::vector<LabeledEmbedding> load_embeddings(const std::string& path);

/// Rescales every vector to unit norm (eval-knn ingestion; backbone-mode
/// exports are raw).
void normalize_embeddings(std::vector<LabeledEmbedding>& items);

// ---------------------------------------------------------------------------

/// One probe point: positive pairs plus shared negatives, all unit-norm.
struct SaturationProbe {
  std::string label;
  std::vector<std::pair<Vec, Vec>> pairs;  // (z_q, z_k)
  std::vector<Vec> negatives;
};

struct SaturationRow {
  std::string label;
  double mean_pos_sim = 0.0;
  /// Norm of the z_k-dependent component of the tau=1 gradient, averaged
  /// over pairs; this is the term the curriculum keeps alive.
  double pos_component_norm = 0.0;
  /// Mean L2 distance between the approximate and exact gradients.
  double approx_residual = 0.0;
};

/// Quantifies positive-pair gradient saturation across probe points.
/// Requires at least two probes.
std::vector<SaturationRow> grad_saturation_report(
    const std::vector<SaturationProbe>& probes);

/// Tab-separated table with a header row.
std::string saturation_table(const std::vector<SaturationRow>& rows);

// ---------------------------------------------------------------------------

struct Heatmaps {
  std::array<std::vector<float>, 4> maps;  // P2..P5, row-major
  std::array<std::pair<int, int>, 4> sizes;  // (h, w) per level
};

/// Pools the query box's regional feature, normalizes it, and correlates it
/// against every spatial position of each key pyramid level (positions are
/// normalized too, so the response is a cosine).
Heatmaps box_query_heatmap(Encoder<float>& enc, const Image& query_image,
                           const Box& query_box, const Image& key_image,
                           const AugConfig& aug);

}  // namespace ccop

#endif  // CCOP_EVALKIT_HPP_
