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

#include "ccop/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include "ccop/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ccop {

AugConfig AugConfig::from(const Config& cfg) {
  AugConfig a;
  a.view_size = static_cast<int>(cfg.get_int("data.view_size"));
  a.crop_scale_lo = cfg.get_double("data.crop_scale_lo");
  a.crop_scale_hi = cfg.get_double("data.crop_scale_hi");
  a.crop_ratio_lo = cfg.get_double("data.crop_ratio_lo");
  a.crop_ratio_hi = cfg.get_double("data.crop_ratio_hi");
  a.color_jitter_prob = cfg.get_double("data.color_jitter_prob");
  a.brightness = cfg.get_double("data.brightness");
  a.contrast = cfg.get_double("data.contrast");
  a.saturation = cfg.get_double("data.saturation");
  a.hue = cfg.get_double("data.hue");
  a.grayscale_prob = cfg.get_double("data.grayscale_prob");
  a.blur_prob = cfg.get_double("data.blur_prob");
  a.blur_sigma_lo = cfg.get_double("data.blur_sigma_lo");
  a.blur_sigma_hi = cfg.get_double("data.blur_sigma_hi");
  a.hflip_prob = cfg.get_double("data.hflip_prob");
  a.clip_drop_fraction = cfg.get_double("data.clip_drop_fraction");
  a.max_shared_objects =
      static_cast<int>(cfg.get_int("data.max_shared_objects"));
  const auto mean = cfg.get_doubles("data.mean");
  const auto stddev = cfg.get_doubles("data.std");
  if (mean.size() != 3 || stddev.size() != 3)
    throw std::runtime_error("data.mean/data.std need 3 values");
  std::copy(mean.begin(), mean.end(), a.mean.begin());
  std::copy(stddev.begin(), stddev.end(), a.stddev.begin());
  return a;
}

namespace {

Box sample_crop(Rng& rng, int w, int h, const AugConfig& cfg) {
  const double area = static_cast<double>(w) * h;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target =
        area * rng.uniform(cfg.crop_scale_lo, cfg.crop_scale_hi);
    const double log_ratio = rng.uniform(std::log(cfg.crop_ratio_lo),
                                         std::log(cfg.crop_ratio_hi));
    const double ratio = std::exp(log_ratio);
    const int cw =
        std::max(1, static_cast<int>(std::round(std::sqrt(target * ratio))));
    const int ch =
        std::max(1, static_cast<int>(std::round(std::sqrt(target / ratio))));
    if (cw <= w && ch <= h) {
      const int x = static_cast<int>(rng.uniform_index(w - cw + 1));
      const int y = static_cast<int>(rng.uniform_index(h - ch + 1));
      return Box{static_cast<double>(x), static_cast<double>(y),
                 static_cast<double>(cw), static_cast<double>(ch)};
    }
  }
  // Ratio-clamped center crop.
  const double in_ratio = static_cast<double>(w) / h;
  int cw = w, ch = h;
  if (in_ratio < cfg.crop_ratio_lo) {
    cw = w;
    ch = std::max(1, static_cast<int>(std::round(w / cfg.crop_ratio_lo)));
  } else if (in_ratio > cfg.crop_ratio_hi) {
    ch = h;
    cw = std::max(1, static_cast<int>(std::round(h * cfg.crop_ratio_hi)));
  }
  return Box{(w - cw) / 2.0, (h - ch) / 2.0, static_cast<double>(cw),
             static_cast<double>(ch)};
}

float luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

void apply_brightness(Image& img, float f) {
  for (float& v : img.data) v = std::clamp(v * f, 0.f, 1.f);
}

void apply_contrast(Image& img, float f) {
  double mean = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      mean += luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
  const float m =
      static_cast<float>(mean / (static_cast<double>(img.width) * img.height));
  for (float& v : img.data) v = std::clamp(f * v + (1.f - f) * m, 0.f, 1.f);
}

void apply_saturation(Image& img, float f) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float l =
          luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) =
            std::clamp(f * img.at(y, x, c) + (1.f - f) * l, 0.f, 1.f);
    }
}

void apply_hue(Image& img, float delta) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      auto hsv =
          rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      auto rgb = hsv_to_rgb(hsv[0] + delta, hsv[1], hsv[2]);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
    }
}

void apply_grayscale(Image& img) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float l =
          luma(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = l;
    }
}

}  // namespace

View augment_view(const Image& image, const ProposalSet& proposals,
                  uint64_t rng_seed, const AugConfig& cfg) {
  Rng rng(rng_seed);
  const int s = cfg.view_size;
  const Box crop = sample_crop(rng, image.width, image.height, cfg);
  Image view = crop_resize(image, crop, s, s);

  if (rng.bernoulli(cfg.color_jitter_prob)) {
    const float fb = static_cast<float>(rng.uniform(
        std::max(0.0, 1.0 - cfg.brightness), 1.0 + cfg.brightness));
    const float fc = static_cast<float>(
        rng.uniform(std::max(0.0, 1.0 - cfg.contrast), 1.0 + cfg.contrast));
    const float fs = static_cast<float>(rng.uniform(
        std::max(0.0, 1.0 - cfg.saturation), 1.0 + cfg.saturation));
    const float fh = static_cast<float>(rng.uniform(-cfg.hue, cfg.hue));
    apply_brightness(view, fb);
    apply_contrast(view, fc);
    apply_saturation(view, fs);
    apply_hue(view, fh);
  }
  if (rng.bernoulli(cfg.grayscale_prob)) apply_grayscale(view);
  if (rng.bernoulli(cfg.blur_prob))
    view = gaussian_blur(view,
                         rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi));
  const bool hflip = rng.bernoulli(cfg.hflip_prob);
  if (hflip) view = hflip_image(view);

  View out;
  out.crop_record = {crop, hflip};
  for (const Proposal& p : proposals.proposals) {
    const Box tb = transform_box(p.box, crop, s, s, hflip);
    if (clipped_fraction(tb, s, s) > cfg.clip_drop_fraction) continue;
    const auto clipped = clip_box(tb, s, s);
    if (!clipped) continue;
    out.boxes.push_back({p.object_id, *clipped});
  }

  out.image = Tensor<float>({3, s, s});
  for (int c = 0; c < 3; ++c) {
    const float mean = static_cast<float>(cfg.mean[c]);
    const float inv_std = static_cast<float>(1.0 / cfg.stddev[c]);
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        out.image.at(c, y, x) = (view.at(y, x, c) - mean) * inv_std;
  }
  return out;
}

ViewPair make_pair(const Image& image, const ProposalSet& proposals,
                   uint64_t seed_q, uint64_t seed_k, const AugConfig& cfg) {
  ViewPair pair;
  pair.query_view = augment_view(image, proposals, seed_q, cfg);
  pair.key_view = augment_view(image, proposals, seed_k, cfg);

  std::map<int, Box> in_key;
  for (const Proposal& p : pair.key_view.boxes) in_key[p.object_id] = p.box;
  std::map<int, Box> originals;
  for (const Proposal& p : proposals.proposals)
    originals[p.object_id] = p.box;

  std::vector<SharedObject> shared;
  for (const Proposal& p : pair.query_view.boxes) {
    auto it = in_key.find(p.object_id);
    if (it == in_key.end()) continue;
    shared.push_back(
        {p.object_id, originals.at(p.object_id), p.box, it->second});
  }

  if (static_cast<int>(shared.size()) > cfg.max_shared_objects) {
    // Seeded uniform subsample, order-preserving.
    Rng rng(derive_seed(seed_q, "shared-cap", seed_k));
    std::vector<int> picks(shared.size());
    std::iota(picks.begin(), picks.end(), 0);
    for (int i = 0; i < cfg.max_shared_objects; ++i) {
      const int j =
          i + static_cast<int>(rng.uniform_index(picks.size() - i));
      std::swap(picks[i], picks[j]);
    }
    picks.resize(cfg.max_shared_objects);
    std::sort(picks.begin(), picks.end());
    std::vector<SharedObject> kept;
    kept.reserve(picks.size());
    for (int i : picks) kept.push_back(shared[i]);
    shared = std::move(kept);
  }
  pair.shared = std::move(shared);
  return pair;
}

// ---------------------------------------------------------------------------

SynthConfig SynthConfig::from(const Config& cfg) {
  SynthConfig s;
  s.canvas = static_cast<int>(cfg.get_int("synth.canvas"));
  s.shapes_min = static_cast<int>(cfg.get_int("synth.shapes_min"));
  s.shapes_max = static_cast<int>(cfg.get_int("synth.shapes_max"));
  s.size_min = static_cast<int>(cfg.get_int("synth.size_min"));
  s.size_max = static_cast<int>(cfg.get_int("synth.size_max"));
  return s;
}

namespace {

void fill_shape(Image& img, int cls, const Box& b,
                const std::array<float, 3>& rgb) {
  const int x0 = static_cast<int>(b.x), y0 = static_cast<int>(b.y);
  const int x1 = static_cast<int>(b.x2()), y1 = static_cast<int>(b.y2());
  const double cx = b.x + b.w / 2.0, cy = b.y + b.h / 2.0;
  const double rx = b.w / 2.0, ry = b.h / 2.0;
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      switch (cls) {
        case 0: {  // disk
          const double dx = (px - cx) / rx, dy = (py - cy) / ry;
          inside = dx * dx + dy * dy <= 1.0;
          break;
        }
        case 1:  // square
          inside = true;
          break;
        default: {  // triangle, apex up
          const double fy = (py - b.y) / b.h;  // 0 at apex row, 1 at base
          const double half = fy * b.w / 2.0;
          inside = fy >= 0.0 && fy <= 1.0 && std::abs(px - cx) <= half;
          break;
        }
      }
      if (inside)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
    }
}

}  // namespace

SynthScene synth_scene(uint64_t rng_seed, const SynthConfig& cfg) {
  Rng rng(rng_seed);
  const int s = cfg.canvas;
  SynthScene scene;
  scene.image = Image(s, s);

  // Textured background: a smooth wave plus mild pixel noise, dim enough
  // that segmentation treats it as one region.
  const float bg_h = static_cast<float>(rng.uniform());
  const float bg_s = static_cast<float>(rng.uniform(0.05, 0.2));
  const float bg_v = static_cast<float>(rng.uniform(0.25, 0.45));
  const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double wave =
          0.05 * std::sin(2.0 * std::numbers::pi *
                              (fx * x / s + fy * y / s) +
                          phase);
      const float v = std::clamp(
          bg_v + static_cast<float>(wave + rng.uniform(-0.015, 0.015)), 0.f,
          1.f);
      const auto rgb = hsv_to_rgb(bg_h, bg_s, v);
      for (int c = 0; c < 3; ++c) scene.image.at(y, x, c) = rgb[c];
    }

  const int count =
      cfg.shapes_min +
      static_cast<int>(rng.uniform_index(cfg.shapes_max - cfg.shapes_min + 1));
  const float class_hue[3] = {0.98f, 0.33f, 0.62f};
  for (int i = 0; i < count; ++i) {
    const int cls = static_cast<int>(rng.uniform_index(3));
    const double size = rng.uniform(cfg.size_min, cfg.size_max);
    const double w = std::min<double>(size * rng.uniform(0.85, 1.2), s - 2);
    const double h = std::min<double>(size, static_cast<double>(s - 2));

    Box best{1, 1, w, h};
    double best_overlap = 1e9;
    for (int attempt = 0; attempt < 50; ++attempt) {
      const Box cand{std::floor(rng.uniform(1.0, s - 1 - w)),
                     std::floor(rng.uniform(1.0, s - 1 - h)), std::floor(w),
                     std::floor(h)};
      double overlap = 0.0;
      for (const auto& [ocls, ob] : scene.objects)
        overlap = std::max(overlap, iou(cand, ob));
      if (overlap < best_overlap) {
        best_overlap = overlap;
        best = cand;
      }
      if (overlap <= 0.0) break;
    }

    const float hue =
        class_hue[cls] + static_cast<float>(rng.uniform(-0.05, 0.05));
    const float sat = static_cast<float>(rng.uniform(0.65, 0.95));
    const float val = static_cast<float>(rng.uniform(0.7, 0.95));
    fill_shape(scene.image, cls, best, hsv_to_rgb(hue, sat, val));
    scene.objects.emplace_back(cls, best);
  }
  return scene;
}

// ---------------------------------------------------------------------------

namespace {
double round2(double v) { return std::round(v * 100.0) / 100.0; }
}  // namespace

void save_proposals(const std::vector<ProposalSet>& sets,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const ProposalSet& ps : sets) {
    nlohmann::ordered_json rec;
    rec["image_id"] = ps.image_id;
    rec["width"] = ps.width;
    rec["height"] = ps.height;
    auto boxes = nlohmann::json::array();
    for (const Proposal& p : ps.proposals)
      boxes.push_back({round2(p.box.x), round2(p.box.y), round2(p.box.w),
                       round2(p.box.h)});
    rec["boxes"] = std::move(boxes);
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::map<std::string, ProposalSet> load_proposals(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open proposals file: " + path);
  std::map<std::string, ProposalSet> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": invalid JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("image_id") ||
        !rec.contains("width") || !rec.contains("height") ||
        !rec.contains("boxes"))
      throw std::runtime_error(where + ": missing required keys");
    ProposalSet ps;
    try {
      ps.image_id = rec.at("image_id").get<std::string>();
      ps.width = rec.at("width").get<int>();
      ps.height = rec.at("height").get<int>();
      const auto& boxes = rec.at("boxes");
      if (!boxes.is_array()) throw std::runtime_error("boxes not an array");
      int idx = 0;
      for (const auto& b : boxes) {
        if (!b.is_array() || b.size() != 4)
          throw std::runtime_error("box entry must have 4 numbers");
        const Box box{b[0].get<double>(), b[1].get<double>(),
                      b[2].get<double>(), b[3].get<double>()};
        if (!box.valid()) throw std::runtime_error("degenerate box");
        ps.proposals.push_back({idx++, box});
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    out[ps.image_id] = std::move(ps);
  }
  return out;
}

// ---------------------------------------------------------------------------

SyntheticDataset::SyntheticDataset(uint64_t seed, int64_t count,
                                   const SynthConfig& scfg,
                                   const ProposalConfig& pcfg,
                                   std::string tag)
    : seed_(seed), count_(count), scfg_(scfg), pcfg_(pcfg),
      tag_(std::move(tag)) {}

SynthScene SyntheticDataset::scene(int64_t i) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = scene_cache_.find(i);
  if (it != scene_cache_.end()) return it->second;
  SynthScene s = synth_scene(derive_seed(seed_, "scene-" + tag_, i), scfg_);
  return scene_cache_.emplace(i, std::move(s)).first->second;
}

ProposalSet SyntheticDataset::proposals(int64_t i) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = prop_cache_.find(i);
    if (it != prop_cache_.end()) return it->second;
  }
  ProposalSet ps = propose_boxes(scene(i).image, pcfg_, id(i));
  std::lock_guard<std::mutex> lock(mu_);
  return prop_cache_.emplace(i, std::move(ps)).first->second;
}

std::string SyntheticDataset::id(int64_t i) const {
  return "synth-" + tag_ + "-" + std::to_string(i);
}

FolderDataset::FolderDataset(const std::string& image_dir,
                             const std::string& proposals_path) {
  static const std::set<std::string> kExts = {".png", ".jpg", ".jpeg",
                                              ".bmp", ".ppm", ".pgm"};
  if (!fs::is_directory(image_dir))
    throw std::runtime_error("not a directory: " + image_dir);
  for (const auto& entry : fs::directory_iterator(image_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (kExts.count(ext)) paths_.push_back(entry.path().string());
  }
  std::sort(paths_.begin(), paths_.end());
  if (paths_.empty())
    throw std::runtime_error("no images found in " + image_dir);
  sets_ = load_proposals(proposals_path);
  for (const std::string& p : paths_) {
    const std::string id = fs::path(p).stem().string();
    ids_.push_back(id);
    if (!sets_.count(id))
      throw std::runtime_error("no proposals for image " + id + " in " +
                               proposals_path);
  }
}

Image FolderDataset::image(int64_t i) const { return load_image(paths_[i]); }

ProposalSet FolderDataset::proposals(int64_t i) const {
  return sets_.at(ids_[i]);
}

// ---------------------------------------------------------------------------

SampleBatch build_batch(const Dataset& ds, const AugConfig& cfg,
                        uint64_t base_seed, int batch_size, int64_t step) {
  SampleBatch batch;
  batch.step = step;
  batch.pairs.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const uint64_t g = static_cast<uint64_t>(step) * batch_size + b;
    SampleMeta meta;
    meta.dataset_index = static_cast<int64_t>(
        derive_seed(base_seed, "sample", g) % static_cast<uint64_t>(ds.size()));
    meta.seed_q = derive_seed(base_seed, "aug-q", g);
    meta.seed_k = derive_seed(base_seed, "aug-k", g);
    const Image img = ds.image(meta.dataset_index);
    const ProposalSet props = ds.proposals(meta.dataset_index);
    batch.pairs.push_back(
        make_pair(img, props, meta.seed_q, meta.seed_k, cfg));
    batch.meta.push_back(meta);
  }
  return batch;
}

BatchPipeline::BatchPipeline(const Dataset& ds, const AugConfig& cfg,
                             uint64_t base_seed, int batch_size,
                             int64_t start_step, int64_t end_step,
                             int workers, int prefetch)
    : ds_(ds),
      cfg_(cfg),
      base_seed_(base_seed),
      batch_size_(batch_size),
      end_step_(end_step),
      prefetch_(std::max(1, prefetch)),
      next_claim_(start_step),
      next_consume_(start_step) {
  const int n = std::max(1, workers);
  threads_.reserve(n);
  for (int i = 0; i < n; ++i)
    threads_.emplace_back([this] { worker_loop(); });
}

BatchPipeline::~BatchPipeline() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_produce_.notify_all();
  for (auto& t : threads_) t.join();
}

void BatchPipeline::worker_loop() {
  while (true) {
    int64_t step;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_produce_.wait(lock, [this] {
        return stop_ || (next_claim_ < end_step_ &&
                         next_claim_ < next_consume_ + prefetch_);
      });
      if (stop_ || next_claim_ >= end_step_) return;
      step = next_claim_++;
    }
    SampleBatch batch = build_batch(ds_, cfg_, base_seed_, batch_size_, step);
    {
      std::lock_guard<std::mutex> lock(mu_);
      ready_.emplace(step, std::move(batch));
    }
    cv_consume_.notify_all();
  }
}

SampleBatch BatchPipeline::next() {
  std::unique_lock<std::mutex> lock(mu_);
  const int64_t want = next_consume_;
  cv_consume_.wait(lock, [this, want] { return ready_.count(want) > 0; });
  SampleBatch batch = std::move(ready_.at(want));
  ready_.erase(want);
  ++next_consume_;
  cv_produce_.notify_all();
  return batch;
}

}  // namespace ccop
