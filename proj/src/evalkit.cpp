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

#include "ccop/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ccop/rng.hpp"
#include "json.hpp"

namespace ccop {

double knn_recall(const std::vector<LabeledEmbedding>& items, int k) {
  const int n = static_cast<int>(items.size());
  if (k < 1) throw std::invalid_argument("knn_recall: k must be >= 1");
  if (n < k + 1)
    throw std::invalid_argument("knn_recall: need at least k+1 items");
  double recall = 0.0;
  std::vector<std::pair<double, int>> sims;
  sims.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    sims.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      sims.emplace_back(items[i].vec.dot(items[j].vec), j);
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    int same = 0;
    for (int t = 0; t < k; ++t)
      if (items[sims[t].second].label == items[i].label) ++same;
    recall += static_cast<double>(same) / k;
  }
  return recall / n;
}

std::vector<EvalItem> synthetic_eval_items(uint64_t seed, int count,
                                           const SynthConfig& cfg) {
  std::vector<EvalItem> items;
  items.reserve(count);
  for (int i = 0; i < count; ++i) {
    SynthScene scene = synth_scene(derive_seed(seed, "scene-eval", i), cfg);
    EvalItem item;
    item.image = std::move(scene.image);
    item.image_id = "synth-eval-" + std::to_string(i);
    item.objects = std::move(scene.objects);
    items.push_back(std::move(item));
  }
  return items;
}

namespace {

/// Eval transform: resize the whole image to the view size, normalize, and
/// scale the boxes along with it.
Tensor<float> eval_view(const Image& img, const AugConfig& aug) {
  const int s = aug.view_size;
  const Box whole{0, 0, static_cast<double>(img.width),
                  static_cast<double>(img.height)};
  const Image view = crop_resize(img, whole, s, s);
  Tensor<float> x({1, 3, s, s});
  for (int c = 0; c < 3; ++c) {
    const float mean = static_cast<float>(aug.mean[c]);
    const float inv_std = static_cast<float>(1.0 / aug.stddev[c]);
    for (int y = 0; y < s; ++y)
      for (int xx = 0; xx < s; ++xx)
        x.at(0, c, y, xx) = (view.at(y, xx, c) - mean) * inv_std;
  }
  return x;
}

Box eval_box(const Image& img, const Box& b, int view_size) {
  const Box whole{0, 0, static_cast<double>(img.width),
                  static_cast<double>(img.height)};
  return transform_box(b, whole, view_size, view_size, /*hflip=*/false);
}

Vec tensor_row(const Tensor<float>& m, int row) {
  Vec v(m.dim(1));
  for (int j = 0; j < m.dim(1); ++j) v[j] = m.at(row, j);
  return v;
}

}  // namespace

std::vector<LabeledEmbedding> compute_embeddings(
    Encoder<float>& enc, const std::vector<EvalItem>& items,
    EmbeddingKind kind, const AugConfig& aug) {
  std::vector<LabeledEmbedding> out;
  for (const EvalItem& item : items) {
    Tensor<float> x = eval_view(item.image, aug);
    PyramidFeatures<float> feats = enc.encode(x, BnMode::kEval, false);
    std::vector<Roi> rois;
    rois.reserve(item.objects.size());
    for (const auto& [label, box] : item.objects)
      rois.push_back({0, eval_box(item.image, box, aug.view_size)});
    Tensor<float> vecs = kind == EmbeddingKind::kPrediction
                             ? enc.embed_objects(feats, rois, false)
                             : enc.pool_objects(feats, rois);
    for (size_t i = 0; i < item.objects.size(); ++i) {
      LabeledEmbedding e;
      e.vec = tensor_row(vecs, static_cast<int>(i));
      e.label = item.objects[i].first;
      e.image_id = item.image_id;
      e.box = item.objects[i].second;
      out.push_back(std::move(e));
    }
  }
  return out;
}

void save_embeddings(const std::vector<LabeledEmbedding>& items,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const LabeledEmbedding& e : items) {
    nlohmann::ordered_json j;
    j["image_id"] = e.image_id;
    j["box"] = {e.box.x, e.box.y, e.box.w, e.box.h};
    if (e.label >= 0) j["label"] = e.label;
    auto vec = nlohmann::json::array();
    for (int i = 0; i < e.vec.size(); ++i) vec.push_back(e.vec[i]);
    j["vec"] = std::move(vec);
    os << j.dump() << "\n";
  }
}

std::vector<LabeledEmbedding> load_embeddings(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open embeddings file: " + path);
  std::vector<LabeledEmbedding> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledEmbedding e;
      e.image_id = j.at("image_id").get<std::string>();
      const auto& b = j.at("box");
      e.box = Box{b.at(0).get<double>(), b.at(1).get<double>(),
                  b.at(2).get<double>(), b.at(3).get<double>()};
      if (j.contains("label")) e.label = j.at("label").get<int>();
      const auto& v = j.at("vec");
      e.vec = Vec(v.size());
      for (size_t i = 0; i < v.size(); ++i) e.vec[i] = v.at(i).get<double>();
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               ex.what());
    }
  }
  return out;
}

void normalize_embeddings(std::vector<LabeledEmbedding>& items) {
  for (LabeledEmbedding& e : items) {
    const double n = e.vec.norm();
    if (n > 1e-12) e.vec /= n;
  }
}

// ---------------------------------------------------------------------------

std::vector<SaturationRow> grad_saturation_report(
    const std::vector<SaturationProbe>& probes) {
  if (probes.size() < 2)
    throw std::invalid_argument(
        "grad_saturation_report: need at least 2 probe points");
  std::vector<SaturationRow> rows;
  rows.reserve(probes.size());
  for (const SaturationProbe& probe : probes) {
    SaturationRow row;
    row.label = probe.label;
    if (probe.pairs.empty()) {
      rows.push_back(row);
      continue;
    }
    for (const auto& [zq, zk] : probe.pairs) {
      row.mean_pos_sim += zq.dot(zk);
      const Vec exact = contrastive_grad(zq, zk, probe.negatives);
      // z_k-dependent component of Eq-5-style gradient: its coefficient is
      // the softmax mass of the negatives.
      double denom = std::exp(zq.dot(zk));
      double neg_mass = 0.0;
      for (const Vec& zn : probe.negatives) {
        const double e = std::exp(zq.dot(zn));
        denom += e;
        neg_mass += e;
      }
      row.pos_component_norm += (neg_mass / denom) * zk.norm();
      if (!probe.negatives.empty())
        row.approx_residual +=
            (approx_grad(zq, zk, probe.negatives) - exact).norm();
    }
    const double inv = 1.0 / static_cast<double>(probe.pairs.size());
    row.mean_pos_sim *= inv;
    row.pos_component_norm *= inv;
    row.approx_residual *= inv;
    rows.push_back(row);
  }
  return rows;
}

std::string saturation_table(const std::vector<SaturationRow>& rows) {
  std::ostringstream os;
  os << "probe\tmean_pos_sim\tpos_component_norm\tapprox_residual\n";
  os.precision(6);
  for (const SaturationRow& r : rows)
    os << r.label << "\t" << r.mean_pos_sim << "\t" << r.pos_component_norm
       << "\t" << r.approx_residual << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------

Heatmaps box_query_heatmap(Encoder<float>& enc, const Image& query_image,
                           const Box& query_box, const Image& key_image,
                           const AugConfig& aug) {
  Tensor<float> xq = eval_view(query_image, aug);
  PyramidFeatures<float> fq = enc.encode(xq, BnMode::kEval, false);
  const Box vb = eval_box(query_image, query_box, aug.view_size);
  Tensor<float> pooled = enc.pool_objects(fq, {{0, vb}});
  Vec kernel = tensor_row(pooled, 0);
  const double knorm = kernel.norm();
  if (knorm > 1e-12) kernel /= knorm;

  Tensor<float> xk = eval_view(key_image, aug);
  PyramidFeatures<float> fk = enc.encode(xk, BnMode::kEval, false);

  Heatmaps out;
  for (int level = 0; level < 4; ++level) {
    const Tensor<float>& p = fk.p[level];
    const int c = p.dim(1), h = p.dim(2), w = p.dim(3);
    out.sizes[level] = {h, w};
    out.maps[level].assign(static_cast<size_t>(h) * w, 0.f);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double dot = 0.0, sq = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          const double v = p.at(0, ch, y, x);
          dot += v * kernel[ch];
          sq += v * v;
        }
        const double n = std::sqrt(sq);
        out.maps[level][static_cast<size_t>(y) * w + x] =
            n > 1e-12 ? static_cast<float>(dot / n) : 0.f;
      }
  }
  return out;
}

}  // namespace ccop
