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

#ifndef CCOP_TRAINER_HPP_
#define CCOP_TRAINER_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ccop/curriculum.hpp"
#include "ccop/datapipe.hpp"
#include "ccop/network.hpp"
#include "ccop/objectives.hpp"

namespace ccop {

struct TrainConfig {
  double base_lr = 0.3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double ema_m = 0.999;
  int batch_size = 256;
  int64_t epochs = 800;
  int64_t steps_per_epoch = 0;  // 0: derived from dataset size
  int64_t total_iters = 0;      // if > 0, overrides epochs * steps_per_epoch
  double grad_clip = 0.0;
  int64_t checkpoint_interval = 0;
  uint64_t seed = 0;
  int workers = 1;
  int prefetch = 4;

  static TrainConfig from(const Config& cfg);

  int64_t resolve_total_iters(int64_t dataset_size) const;
};

struct StepReport {
  int64_t iteration = 0;
  double lr = 0.0;
  double loss_img = 0.0;
  double loss_obj = 0.0;
  double loss_intra = 0.0;
  double loss_total = 0.0;
  double zeta = 0.0;
  double beta = 1.0;
  int shared_objects = 0;
  double pos_grad_norm = 0.0;  // z_k-dependent component of the image loss

  std::string to_json() const;
};

/// 0.5 * base * (1 + cos(pi * t / T)).
double cosine_lr(int64_t t, int64_t total, double base);

/// SGD with momentum; decay skips parameters flagged decay=false.
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay, double grad_clip)
      : momentum_(momentum), weight_decay_(weight_decay),
        grad_clip_(grad_clip) {}

  void step(std::vector<Param<float>*>& params, double lr);

  void save(std::ostream& os) const;
  void load(std::istream& is, const std::vector<Param<float>*>& params);

 private:
  double momentum_, weight_decay_, grad_clip_;
  std::map<std::string, Tensor<float>> velocity_;
};

/// Raised when a step produces a non-finite loss; carries the seeds needed
/// to replay the offending batch.
struct NonFiniteLossError : std::runtime_error {
  explicit NonFiniteLossError(const std::string& what)
      : std::runtime_error(what) {}
};

/// The full training state: both encoders, queues, optimizer, curriculum.
class Trainer {
 public:
  Trainer(const Config& cfg, int64_t dataset_size);

  StepReport train_step(const SampleBatch& batch);

  CurriculumState& curriculum() { return curriculum_; }
  Encoder<float>& query_encoder() { return *query_; }
  Encoder<float>& key_encoder() { return *key_; }
  MemoryQueue& image_queue() { return q_img_; }
  MemoryQueue& object_queue() { return q_obj_; }
  const TrainConfig& train_config() const { return tcfg_; }
  const AugConfig& aug_config() const { return aug_; }
  int64_t total_iters() const { return curriculum_.total_iters; }
  uint64_t config_hash() const { return config_hash_; }

  void save_checkpoint(const std::string& dir) const;
  void load_checkpoint(const std::string& dir);

 private:
  TrainConfig tcfg_;
  LossConfig lcfg_;
  AugConfig aug_;
  CurriculumState curriculum_;
  std::unique_ptr<Encoder<float>> query_, key_;
  std::vector<Param<float>*> query_params_, key_params_;
  std::vector<Buffer<float>*> query_buffers_, key_buffers_;
  SgdOptimizer optimizer_;
  MemoryQueue q_img_, q_obj_;
  uint64_t config_hash_ = 0;
};

/// Runs T steps over the dataset, appending one StepReport line per step to
/// <out_dir>/metrics.jsonl and checkpointing into <out_dir>/checkpoint
/// (plus <out_dir>/ckpt-<iter> at the configured interval). Returns the
/// final checkpoint path.
std::string train_loop(const Dataset& dataset, const Config& cfg,
                       const std::string& out_dir,
                       const std::string& resume_from = "");

/// Reads a checkpoint directory back into a Trainer (encoder shapes come
/// from the stored effective config).
std::unique_ptr<Trainer> load_trainer(const std::string& checkpoint_dir,
                                      Config* cfg_out = nullptr);

}  // namespace ccop

#endif  // CCOP_TRAINER_HPP_
