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

#ifndef CCOP_DATAPIPE_HPP_
#define CCOP_DATAPIPE_HPP_

#include <array>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ccop/config.hpp"
#include "ccop/geometry.hpp"
#include "ccop/image.hpp"
#include "ccop/proposals.hpp"
#include "ccop/tensor.hpp"

namespace ccop {

struct AugConfig {
  int view_size = 224;
  double crop_scale_lo = 0.2, crop_scale_hi = 1.0;
  double crop_ratio_lo = 0.75, crop_ratio_hi = 4.0 / 3.0;
  double color_jitter_prob = 0.8;
  double brightness = 0.4, contrast = 0.4, saturation = 0.4, hue = 0.1;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5, blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;
  double hflip_prob = 0.5;
  double clip_drop_fraction = 0.4;
  int max_shared_objects = 16;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};

  static AugConfig from(const Config& cfg);
};

struct CropRecord {
  Box crop;
  bool hflip = false;
};

/// One augmented view: normalized CHW pixels plus the surviving proposal
/// boxes in view coordinates. Boxes clipped by more than the configured
/// fraction of their area are gone.
struct View {
  Tensor<float> image;  // [3, S, S]
  std::vector<Proposal> boxes;
  CropRecord crop_record;
};

struct SharedObject {
  int object_id = 0;
  Box original_box;  // original-image coordinates (pre-augmentation)
  Box query_box;     // query-view coordinates
  Box key_box;       // key-view coordinates
};

struct ViewPair {
  View query_view;
  View key_view;
  std::vector<SharedObject> shared;

  std::vector<int> shared_ids() const {
    std::vector<int> ids;
    ids.reserve(shared.size());
    for (const auto& s : shared) ids.push_back(s.object_id);
    return ids;
  }
};

/// Random resized crop + MoCo v2 photometric ops + flip, with full box
/// bookkeeping. Bit-reproducible for a fixed (image, proposals, seed, cfg).
View augment_view(const Image& image, const ProposalSet& proposals,
                  uint64_t rng_seed, const AugConfig& cfg);

/// Two augment_view calls; shared objects are the proposals surviving in
/// both views (subsampled to cfg.max_shared_objects). A pair with no shared
/// objects is still valid.
ViewPair make_pair(const Image& image, const ProposalSet& proposals,
                   uint64_t seed_q, uint64_t seed_k, const AugConfig& cfg);

// ---------------------------------------------------------------------------

struct SynthConfig {
  int canvas = 64;
  int shapes_min = 3, shapes_max = 3;
  int size_min = 14, size_max = 26;

  static SynthConfig from(const Config& cfg);
};

/// Colored shapes (disk / square / triangle) on a textured background; the
/// class label is the shape kind.
struct SynthScene {
  Image image;
  std::vector<std::pair<int, Box>> objects;  // (class_label, box)
};

SynthScene synth_scene(uint64_t rng_seed, const SynthConfig& cfg);

// ---------------------------------------------------------------------------

/// Proposals file: one JSON record per line,
/// {"image_id": "...", "width": W, "height": H, "boxes": [[x,y,w,h], ...]}
/// with boxes rounded to 2 decimals; object_id is the list index.
void save_proposals(const std::vector<ProposalSet>& sets,
                    const std::string& path);
std::map<std::string, ProposalSet> load_proposals(const std::string& path);

// ---------------------------------------------------------------------------

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int64_t size() const = 0;
  virtual Image image(int64_t i) const = 0;
  virtual ProposalSet proposals(int64_t i) const = 0;
  virtual std::string id(int64_t i) const = 0;
};

/// Scenes materialized on demand from a seed; proposals run selective
/// search lazily and cache per index. Thread-safe.
class SyntheticDataset final : public Dataset {
 public:
  SyntheticDataset(uint64_t seed, int64_t count, const SynthConfig& scfg,
                   const ProposalConfig& pcfg, std::string tag);

  int64_t size() const override { return count_; }
  Image image(int64_t i) const override { return scene(i).image; }
  ProposalSet proposals(int64_t i) const override;
  std::string id(int64_t i) const override;

  SynthScene scene(int64_t i) const;

 private:
  uint64_t seed_;
  int64_t count_;
  SynthConfig scfg_;
  ProposalConfig pcfg_;
  std::string tag_;
  mutable std::mutex mu_;
  mutable std::unordered_map<int64_t, SynthScene> scene_cache_;
  mutable std::unordered_map<int64_t, ProposalSet> prop_cache_;
};

/// A directory of raster images plus a proposals file keyed by image id
/// (the filename stem).
class FolderDataset final : public Dataset {
 public:
  FolderDataset(const std::string& image_dir,
                const std::string& proposals_path);

  int64_t size() const override {
    return static_cast<int64_t>(paths_.size());
  }
  Image image(int64_t i) const override;
  ProposalSet proposals(int64_t i) const override;
  std::string id(int64_t i) const override { return ids_[i]; }

 private:
  std::vector<std::string> paths_;
  std::vector<std::string> ids_;
  std::map<std::string, ProposalSet> sets_;
};

// ---------------------------------------------------------------------------

struct SampleMeta {
  int64_t dataset_index = 0;
  uint64_t seed_q = 0;
  uint64_t seed_k = 0;
};

struct SampleBatch {
  int64_t step = 0;
  std::vector<ViewPair> pairs;
  std::vector<SampleMeta> meta;
};

/// Builds the batch for a given step as a pure function of (dataset, cfg,
/// seed, step); usable directly or through the prefetching pipeline below.
SampleBatch build_batch(const Dataset& ds, const AugConfig& cfg,
                        uint64_t base_seed, int batch_size, int64_t step);

/// Bounded producer/consumer: any number of producer workers, one consumer.
/// Batches are handed out strictly in step order, so the consumer sees the
/// same stream regardless of worker count or arrival order.
class BatchPipeline {
 public:
  BatchPipeline(const Dataset& ds, const AugConfig& cfg, uint64_t base_seed,
                int batch_size, int64_t start_step, int64_t end_step,
                int workers, int prefetch);
  ~BatchPipeline();

  /// Next sequential batch; call exactly (end_step - start_step) times.
  SampleBatch next();

 private:
  void worker_loop();

  const Dataset& ds_;
  AugConfig cfg_;
  uint64_t base_seed_;
  int batch_size_;
  int64_t end_step_;
  int prefetch_;

  std::mutex mu_;
  std::condition_variable cv_produce_, cv_consume_;
  int64_t next_claim_;
  int64_t next_consume_;
  std::map<int64_t, SampleBatch> ready_;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace ccop

#endif  // CCOP_DATAPIPE_HPP_
