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

#include "ccop/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ccop/rng.hpp"

namespace ccop {

namespace {

struct Entry {
  const char* key;
  const char* value;
  const char* comment;
};

// The single source of truth for keys, defaults, and rationale.
const std::vector<Entry>& reference_entries() {
  static const std::vector<Entry> entries = {
      // data ---------------------------------------------------------------
      {"data.view_size", "224", "augmented view edge length in pixels"},
      {"data.crop_scale_lo", "0.2",
       "random-resized-crop area fraction range (MoCo v2 recipe)"},
      {"data.crop_scale_hi", "1.0", ""},
      {"data.crop_ratio_lo", "0.75", "crop aspect-ratio range, log-uniform"},
      {"data.crop_ratio_hi", "1.3333333333333333", ""},
      {"data.color_jitter_prob", "0.8",
       "probability of applying the colour distortion block"},
      {"data.brightness", "0.4", "colour jitter strengths (MoCo v2 recipe)"},
      {"data.contrast", "0.4", ""},
      {"data.saturation", "0.4", ""},
      {"data.hue", "0.1", "hue shift as a fraction of a full turn"},
      {"data.grayscale_prob", "0.2", "random grayscale probability"},
      {"data.blur_prob", "0.5", "random Gaussian blur probability"},
      {"data.blur_sigma_lo", "0.1", "blur sigma range"},
      {"data.blur_sigma_hi", "2.0", ""},
      {"data.hflip_prob", "0.5", "horizontal flip probability"},
      {"data.clip_drop_fraction", "0.4",
       "boxes clipped by strictly more than this fraction are dropped"},
      {"data.max_shared_objects", "16",
       "per-pair cap on shared objects (uniform seeded subsample)"},
      {"data.mean", "0.5,0.5,0.5", "per-channel pixel normalization mean"},
      {"data.std", "0.25,0.25,0.25", "per-channel pixel normalization std"},
      {"data.workers", "1", "producer threads feeding the trainer"},
      {"data.prefetch", "4", "max prefetched batches in the bounded queue"},
      // synth --------------------------------------------------------------
      {"synth.canvas", "64", "synthetic scene canvas edge in pixels"},
      {"synth.shapes_min", "3", "shapes per scene, inclusive range"},
      {"synth.shapes_max", "3", ""},
      {"synth.size_min", "14", "shape edge/diameter range in pixels"},
      {"synth.size_max", "26", ""},
      {"synth.train_scenes", "200", "synthetic training set size"},
      {"synth.eval_scenes", "100", "held-out synthetic scenes for eval"},
      // proposals ----------------------------------------------------------
      {"proposals.k", "200",
       "graph-segmentation threshold scale (color units on a 0..255 scale)"},
      {"proposals.sigma", "0.8", "pre-segmentation Gaussian smoothing"},
      {"proposals.min_size", "50", "minimum segment size in pixels"},
      {"proposals.merge_iou", "0.5", "proposals with IoU above this merge"},
      {"proposals.min_area", "144", "boxes with area below 12^2 are removed"},
      {"proposals.ratio_lo", "0.33",
       "aspect-ratio bounds, exclusive: keep ratio_lo < w/h < ratio_hi"},
      {"proposals.ratio_hi", "3.0", ""},
      {"proposals.max_boxes", "32", "keep at most this many largest boxes"},
      // curriculum ---------------------------------------------------------
      {"curriculum.enabled", "true", "spatial-noise curriculum switch"},
      {"curriculum.zeta_start", "0.3",
       "noise magnitude, linear in the training iteration"},
      {"curriculum.zeta_end", "1.0", ""},
      {"curriculum.beta_start", "0.8",
       "IoU floor for jittered candidates, linear in the iteration"},
      {"curriculum.beta_end", "0.3", ""},
      {"curriculum.candidates", "4", "jittered candidates per box (K)"},
      {"curriculum.max_attempts", "20",
       "rejection attempts before falling back to the unjittered box"},
      // network ------------------------------------------------------------
      {"network.backbone", "tiny", "tiny | resnet50"},
      {"network.widths", "16,32,64,128,256",
       "tiny backbone stage widths (stem, C2..C5)"},
      {"network.fpn_channels", "256", "pyramid channel width"},
      {"network.embed_dim", "128", "embedding dimension"},
      {"network.mlp_hidden", "2048", "hidden width of both MLP heads"},
      {"network.roi_size", "7", "RoIAlign output grid edge"},
      {"network.bn_momentum", "0.1",
       "running-statistics update rate on the query branch"},
      // loss ---------------------------------------------------------------
      {"loss.tau", "0.2", "contrastive temperature (MoCo v2 convention)"},
      {"loss.alpha", "0.4", "hinge margin of the intra-image loss"},
      {"loss.iou_disjoint", "0.05",
       "pairs with IoU strictly below this count as disjoint"},
      {"loss.w_img", "1.0", "loss term weights; 0 disables a term"},
      {"loss.w_obj", "1.0", ""},
      {"loss.w_intra", "1.0", ""},
      {"loss.queue_capacity", "65335",
       "memory queue capacity for both queues; documented literal default, "
       "possibly intended as 65536"},
      // train --------------------------------------------------------------
      {"train.base_lr", "0.3", "initial learning rate, cosine-annealed to 0"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.weight_decay", "0.0001",
       "L2 decay; skips biases and normalization parameters"},
      {"train.ema_m", "0.999", "key-encoder EMA coefficient"},
      {"train.batch_size", "256", ""},
      {"train.epochs", "800", ""},
      {"train.steps_per_epoch", "0", "0 = ceil(dataset size / batch)"},
      {"train.total_iters", "0",
       "if > 0, replaces epochs * steps_per_epoch"},
      {"train.grad_clip", "0.0", "global grad-norm clip; 0 = off"},
      {"train.checkpoint_interval", "0",
       "checkpoint every N iterations; 0 = final only"},
      {"train.seed", "0", "master seed for init, data, and curriculum"},
  };
  return entries;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const Entry& e : reference_entries()) c.values_[e.key] = e.value;
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key))
    throw std::runtime_error("unknown config key: " + key);
  values_[key] = trim(value);
}

Config Config::from_text(const std::string& text) {
  Config c = defaults();
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error("config line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string Config::reference_text() {
  std::ostringstream os;
  os << "# Every key with its default. Values in a --config file override "
        "these.\n";
  std::string section;
  for (const Entry& e : reference_entries()) {
    const std::string key(e.key);
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      os << "\n";
      section = sec;
    }
    if (e.comment[0] != '\0') os << "# " << e.comment << "\n";
    os << e.key << " = " << e.value << "\n";
  }
  return os.str();
}

const std::string& Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::runtime_error("unknown config key: " + key);
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get_string(key);
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not a number: " + v);
  }
}

int64_t Config::get_int(const std::string& key) const {
  const std::string& v = get_string(key);
  try {
    size_t pos = 0;
    const int64_t d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not an integer: " + v);
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get_string(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config key " + key + ": not a boolean: " + v);
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& tok : split(get_string(key), ','))
    out.push_back(std::stod(tok));
  return out;
}

std::vector<int64_t> Config::get_ints(const std::string& key) const {
  std::vector<int64_t> out;
  for (const std::string& tok : split(get_string(key), ','))
    out.push_back(std::stoll(tok));
  return out;
}

std::string Config::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

uint64_t Config::hash() const { return hash_tag(dump()); }

}  // namespace ccop
