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

#include "ccop/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ccop {

TrainConfig TrainConfig::from(const Config& cfg) {
  TrainConfig t;
  t.base_lr = cfg.get_double("train.base_lr");
  t.momentum = cfg.get_double("train.momentum");
  t.weight_decay = cfg.get_double("train.weight_decay");
  t.ema_m = cfg.get_double("train.ema_m");
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  t.epochs = cfg.get_int("train.epochs");
  t.steps_per_epoch = cfg.get_int("train.steps_per_epoch");
  t.total_iters = cfg.get_int("train.total_iters");
  t.grad_clip = cfg.get_double("train.grad_clip");
  t.checkpoint_interval = cfg.get_int("train.checkpoint_interval");
  t.seed = static_cast<uint64_t>(cfg.get_int("train.seed"));
  t.workers = static_cast<int>(cfg.get_int("data.workers"));
  t.prefetch = static_cast<int>(cfg.get_int("data.prefetch"));
  if (t.base_lr <= 0 || t.batch_size < 1)
    throw std::invalid_argument("train: base_lr and batch_size must be > 0");
  return t;
}

int64_t TrainConfig::resolve_total_iters(int64_t dataset_size) const {
  if (total_iters > 0) return total_iters;
  const int64_t spe = steps_per_epoch > 0
                          ? steps_per_epoch
                          : (dataset_size + batch_size - 1) / batch_size;
  return epochs * spe;
}

double cosine_lr(int64_t t, int64_t total, double base) {
  if (total <= 0) return base;
  return 0.5 * base *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / total));
}

std::string StepReport::to_json() const {
  nlohmann::ordered_json j;
  j["iter"] = iteration;
  j["lr"] = lr;
  j["loss_img"] = loss_img;
  j["loss_obj"] = loss_obj;
  j["loss_intra"] = loss_intra;
  j["loss_total"] = loss_total;
  j["zeta"] = zeta;
  j["beta"] = beta;
  j["shared"] = shared_objects;
  j["pos_grad_norm"] = pos_grad_norm;
  return j.dump();
}

// ---------------------------------------------------------------------------

void SgdOptimizer::step(std::vector<Param<float>*>& params, double lr) {
  double sq_norm = 0.0;
  if (grad_clip_ > 0.0) {
    for (auto* p : params)
      for (float g : p->grad.data) sq_norm += static_cast<double>(g) * g;
  }
  const double clip_scale =
      (grad_clip_ > 0.0 && sq_norm > grad_clip_ * grad_clip_)
          ? grad_clip_ / std::sqrt(sq_norm)
          : 1.0;
  for (auto* p : params) {
    auto [it, fresh] = velocity_.try_emplace(p->name, p->value.shape);
    Tensor<float>& v = it->second;
    const float wd =
        p->decay ? static_cast<float>(weight_decay_) : 0.f;
    const float mu = static_cast<float>(momentum_);
    const float cs = static_cast<float>(clip_scale);
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      const float g = p->grad.data[i] * cs + wd * p->value.data[i];
      v.data[i] = mu * v.data[i] + g;
      p->value.data[i] -= static_cast<float>(lr) * v.data[i];
    }
  }
}

void SgdOptimizer::save(std::ostream& os) const {
  write_tensor_file_header(os, static_cast<uint32_t>(velocity_.size()));
  for (const auto& [name, v] : velocity_)
    write_named_tensor(os, name, v.shape, v.data.data(), sizeof(float),
                       v.numel());
}

void SgdOptimizer::load(std::istream& is,
                        const std::vector<Param<float>*>& params) {
  velocity_.clear();
  const uint32_t count = read_tensor_file_header(is);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name;
    std::vector<int> shape;
    std::vector<char> raw;
    size_t elem = 0;
    read_named_tensor(is, name, shape, raw, elem);
    if (elem != sizeof(float))
      throw std::runtime_error("optimizer state: dtype mismatch for " + name);
    Tensor<float> v(shape);
    std::memcpy(v.data.data(), raw.data(), raw.size());
    velocity_.emplace(name, std::move(v));
  }
  for (const auto& [name, v] : velocity_) {
    const bool known = std::any_of(
        params.begin(), params.end(),
        [&](const Param<float>* p) { return p->name == name; });
    if (!known)
      throw std::runtime_error("optimizer state: unknown parameter " + name);
  }
}

// ---------------------------------------------------------------------------

namespace {

Vec row_as_vec(const Tensor<float>& m, int row) {
  Vec v(m.dim(1));
  for (int j = 0; j < m.dim(1); ++j) v[j] = m.at(row, j);
  return v;
}

void add_row(Tensor<float>& m, int row, const Vec& v, double scale) {
  for (int j = 0; j < m.dim(1); ++j)
    m.at(row, j) += static_cast<float>(scale * v[j]);
}

void save_queue(std::ostream& os, const MemoryQueue& q) {
  const uint64_t n = static_cast<uint64_t>(q.size());
  const uint32_t d = static_cast<uint32_t>(q.dim());
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  os.write(reinterpret_cast<const char*>(&d), sizeof(d));
  for (const Vec& v : q.negatives())
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(sizeof(double) * v.size()));
  if (!os) throw std::runtime_error("queue write failed");
}

void load_queue(std::istream& is, MemoryQueue& q) {
  uint64_t n = 0;
  uint32_t d = 0;
  if (!is.read(reinterpret_cast<char*>(&n), sizeof(n)) ||
      !is.read(reinterpret_cast<char*>(&d), sizeof(d)))
    throw std::runtime_error("queue state truncated");
  if (d != static_cast<uint32_t>(q.dim()))
    throw std::runtime_error("queue state: dimension mismatch");
  for (uint64_t i = 0; i < n; ++i) {
    Vec v(d);
    if (!is.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(sizeof(double) * d)))
      throw std::runtime_error("queue state truncated");
    q.push(v);
  }
}

}  // namespace

Trainer::Trainer(const Config& cfg, int64_t dataset_size)
    : tcfg_(TrainConfig::from(cfg)),
      lcfg_(LossConfig::from(cfg)),
      aug_(AugConfig::from(cfg)),
      curriculum_(CurriculumState::from(
          cfg, TrainConfig::from(cfg).resolve_total_iters(dataset_size))),
      query_(std::make_unique<Encoder<float>>(NetworkConfig::from(cfg))),
      key_(std::make_unique<Encoder<float>>(NetworkConfig::from(cfg))),
      optimizer_(tcfg_.momentum, tcfg_.weight_decay, tcfg_.grad_clip),
      q_img_(lcfg_.queue_capacity, NetworkConfig::from(cfg).embed_dim),
      q_obj_(lcfg_.queue_capacity, NetworkConfig::from(cfg).embed_dim),
      config_hash_(cfg.hash()) {
  query_->init(tcfg_.seed);
  query_params_ = query_->params();
  key_params_ = key_->params();
  query_buffers_ = query_->buffers();
  key_buffers_ = key_->buffers();
  // Standard momentum-encoder initialization: the key starts as a copy.
  copy_params(key_params_, query_params_);
  sync_buffers(key_buffers_, query_buffers_);
}

StepReport Trainer::train_step(const SampleBatch& batch) {
  const int b_count = static_cast<int>(batch.pairs.size());
  if (b_count == 0) throw std::invalid_argument("train_step: empty batch");
  const int s = aug_.view_size;
  const int dim = query_->config().embed_dim;
  const int64_t t = curriculum_.t;

  StepReport report;
  report.iteration = t;
  report.lr = cosine_lr(t, curriculum_.total_iters, tcfg_.base_lr);
  if (curriculum_.enabled) {
    report.zeta = zeta_at(curriculum_);
    report.beta = beta_at(curriculum_);
  }

  const bool use_img = lcfg_.w_img > 0.0;
  const bool use_obj = lcfg_.w_obj > 0.0;
  const bool use_intra = lcfg_.w_intra > 0.0;

  // (1) Query branch.
  Tensor<float> x_q({b_count, 3, s, s});
  Tensor<float> x_k({b_count, 3, s, s});
  for (int b = 0; b < b_count; ++b) {
    std::copy(batch.pairs[b].query_view.image.data.begin(),
              batch.pairs[b].query_view.image.data.end(),
              x_q.data.begin() + static_cast<int64_t>(b) * 3 * s * s);
    std::copy(batch.pairs[b].key_view.image.data.begin(),
              batch.pairs[b].key_view.image.data.end(),
              x_k.data.begin() + static_cast<int64_t>(b) * 3 * s * s);
  }
  PyramidFeatures<float> feats_q =
      query_->encode(x_q, BnMode::kTrain, /*keep=*/true);
  Tensor<float> z_img_q = query_->embed_image(feats_q, /*keep=*/true);

  std::vector<Roi> rois_q;
  std::vector<int> roi_sample;  // batch index per roi row
  for (int b = 0; b < b_count; ++b)
    for (const SharedObject& so : batch.pairs[b].shared) {
      rois_q.push_back({b, so.query_box});
      roi_sample.push_back(b);
      ++report.shared_objects;
    }
  const bool need_obj_embed =
      (use_obj || use_intra) && !rois_q.empty();
  Tensor<float> z_obj_q;
  if (need_obj_embed)
    z_obj_q = query_->embed_objects(feats_q, rois_q, /*keep=*/true);

  // (2) Key branch under the no-gradient contract, batch statistics taken
  // from the query branch's running estimates.
  sync_buffers(key_buffers_, query_buffers_);
  PyramidFeatures<float> feats_k =
      key_->encode(x_k, BnMode::kEval, /*keep=*/false);
  Tensor<float> z_img_k = key_->embed_image(feats_k, /*keep=*/false);

  // Jittered candidates for every shared key box, hardest one selected.
  std::vector<Vec> selected_keys(rois_q.size());
  if (use_obj && !rois_q.empty()) {
    const int k_cand = curriculum_.candidates;
    std::vector<Roi> rois_cand;
    rois_cand.reserve(rois_q.size() * k_cand);
    for (int b = 0; b < b_count; ++b) {
      int obj_i = 0;
      const uint64_t step_seed = derive_seed(
          tcfg_.seed, "sncl",
          static_cast<uint64_t>(t) * tcfg_.batch_size + b);
      for (const SharedObject& so : batch.pairs[b].shared) {
        const uint64_t cand_seed = derive_seed(step_seed, "obj", obj_i++);
        const auto cands =
            sample_candidates(so.key_box, curriculum_, s, s, cand_seed);
        for (const Box& cb : cands) rois_cand.push_back({b, cb});
      }
    }
    Tensor<float> z_cand =
        key_->embed_objects(feats_k, rois_cand, /*keep=*/false);
    for (size_t i = 0; i < rois_q.size(); ++i) {
      const Vec zq = row_as_vec(z_obj_q, static_cast<int>(i));
      std::vector<Vec> cand_vecs(k_cand);
      for (int c = 0; c < k_cand; ++c)
        cand_vecs[c] =
            row_as_vec(z_cand, static_cast<int>(i) * k_cand + c);
      selected_keys[i] = cand_vecs[scs_select(zq, cand_vecs)];
    }
  }

  // (3) Losses and their gradients wrt the query-branch embeddings.
  Tensor<float> dz_img({b_count, dim});
  Tensor<float> dz_obj;
  if (need_obj_embed) dz_obj = Tensor<float>({z_obj_q.dim(0), dim});

  double loss_img = 0.0, loss_obj = 0.0, loss_intra = 0.0;
  double pos_grad_acc = 0.0;
  if (use_img) {
    for (int b = 0; b < b_count; ++b) {
      const Vec zq = row_as_vec(z_img_q, b);
      const Vec zk = row_as_vec(z_img_k, b);
      const InfoNceResult r =
          info_nce_with_grad(zq, zk, q_img_.negatives(), lcfg_.tau);
      loss_img += r.loss;
      pos_grad_acc += r.negative_mass / lcfg_.tau;
      add_row(dz_img, b, r.dz_q, lcfg_.w_img / b_count);
    }
    loss_img /= b_count;
    pos_grad_acc /= b_count;
  }

  if (use_obj && !rois_q.empty()) {
    size_t row = 0;
    for (int b = 0; b < b_count; ++b) {
      const size_t n_shared = batch.pairs[b].shared.size();
      if (n_shared == 0) continue;
      double sample_loss = 0.0;
      for (size_t i = 0; i < n_shared; ++i, ++row) {
        const Vec zq = row_as_vec(z_obj_q, static_cast<int>(row));
        const InfoNceResult r = info_nce_with_grad(
            zq, selected_keys[row], q_obj_.negatives(), lcfg_.tau);
        sample_loss += r.loss;
        add_row(dz_obj, static_cast<int>(row), r.dz_q,
                lcfg_.w_obj / (b_count * static_cast<double>(n_shared)));
      }
      loss_obj += sample_loss / static_cast<double>(n_shared);
    }
    loss_obj /= b_count;
  }

  if (use_intra && need_obj_embed) {
    size_t row0 = 0;
    for (int b = 0; b < b_count; ++b) {
      const size_t n_shared = batch.pairs[b].shared.size();
      if (n_shared == 0) continue;
      std::vector<Box> boxes;
      std::vector<Vec> embs;
      boxes.reserve(n_shared);
      for (size_t i = 0; i < n_shared; ++i) {
        boxes.push_back(batch.pairs[b].shared[i].original_box);
        embs.push_back(row_as_vec(z_obj_q, static_cast<int>(row0 + i)));
      }
      std::vector<Vec> grads(n_shared, Vec::Zero(dim));
      loss_intra += intra_image_loss_with_grad(
          boxes, embs, lcfg_.alpha, lcfg_.iou_disjoint, grads);
      for (size_t i = 0; i < n_shared; ++i)
        add_row(dz_obj, static_cast<int>(row0 + i), grads[i],
                lcfg_.w_intra / b_count);
      row0 += n_shared;
    }
    loss_intra /= b_count;
  }

  report.loss_img = loss_img;
  report.loss_obj = loss_obj;
  report.loss_intra = loss_intra;
  report.loss_total = total_loss(loss_img, loss_obj, loss_intra, lcfg_.w_img,
                                 lcfg_.w_obj, lcfg_.w_intra);
  report.pos_grad_norm = pos_grad_acc;
  if (!std::isfinite(report.loss_total) || !std::isfinite(loss_img) ||
      !std::isfinite(loss_obj) || !std::isfinite(loss_intra)) {
    std::ostringstream oss;
    oss << "non-finite loss at iteration " << t << "; batch seeds:";
    for (const SampleMeta& m : batch.meta)
      oss << " (index=" << m.dataset_index << ", seed_q=" << m.seed_q
          << ", seed_k=" << m.seed_k << ")";
    throw NonFiniteLossError(oss.str());
  }

  // (4) SGD on the query encoder only.
  for (auto* p : query_params_) p->grad.zero();
  query_->backward(feats_q, use_img ? &dz_img : nullptr,
                   need_obj_embed ? &dz_obj : nullptr);
  optimizer_.step(query_params_, report.lr);

  // (5) Momentum update of the key encoder.
  ema_update(key_params_, query_params_, tcfg_.ema_m);

  // (6) Queue pushes come last so a step never contrasts against itself.
  if (use_img)
    for (int b = 0; b < b_count; ++b) q_img_.push(row_as_vec(z_img_k, b));
  if (use_obj)
    for (const Vec& v : selected_keys)
      if (v.size() > 0) q_obj_.push(v);

  // (7) Advance the curriculum.
  curriculum_.t = t + 1;
  return report;
}

// ---------------------------------------------------------------------------

void Trainer::save_checkpoint(const std::string& dir) const {
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "query.params", std::ios::binary);
    save_params<float>(os, query_params_, query_buffers_);
  }
  {
    std::ofstream os(fs::path(dir) / "key.params", std::ios::binary);
    save_params<float>(os, key_params_, key_buffers_);
  }
  {
    std::ofstream os(fs::path(dir) / "optimizer.bin", std::ios::binary);
    optimizer_.save(os);
  }
  {
    std::ofstream os(fs::path(dir) / "queues.bin", std::ios::binary);
    save_queue(os, q_img_);
    save_queue(os, q_obj_);
  }
  nlohmann::ordered_json j;
  j["iteration"] = curriculum_.t;
  j["total_iters"] = curriculum_.total_iters;
  std::ostringstream hex;
  hex << std::hex << config_hash_;
  j["config_hash"] = hex.str();
  std::ofstream(fs::path(dir) / "state.json") << j.dump(2) << "\n";
}

void Trainer::load_checkpoint(const std::string& dir) {
  std::ifstream st(fs::path(dir) / "state.json");
  if (!st)
    throw std::runtime_error("checkpoint: missing state.json in " + dir);
  nlohmann::json j = nlohmann::json::parse(st);
  std::ostringstream hex;
  hex << std::hex << config_hash_;
  if (j.at("config_hash").get<std::string>() != hex.str())
    throw std::runtime_error(
        "checkpoint: config hash mismatch; refusing to resume with a "
        "different effective config");
  curriculum_.t = j.at("iteration").get<int64_t>();
  curriculum_.total_iters = j.at("total_iters").get<int64_t>();

  {
    std::ifstream is(fs::path(dir) / "query.params", std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: missing query.params");
    load_params<float>(is, query_params_, query_buffers_);
  }
  {
    std::ifstream is(fs::path(dir) / "key.params", std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: missing key.params");
    load_params<float>(is, key_params_, key_buffers_);
  }
  {
    std::ifstream is(fs::path(dir) / "optimizer.bin", std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: missing optimizer.bin");
    optimizer_.load(is, query_params_);
  }
  {
    std::ifstream is(fs::path(dir) / "queues.bin", std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: missing queues.bin");
    q_img_ = MemoryQueue(lcfg_.queue_capacity, q_img_.dim());
    q_obj_ = MemoryQueue(lcfg_.queue_capacity, q_obj_.dim());
    load_queue(is, q_img_);
    load_queue(is, q_obj_);
  }
}

// ---------------------------------------------------------------------------

std::string train_loop(const Dataset& dataset, const Config& cfg,
                       const std::string& out_dir,
                       const std::string& resume_from) {
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "config.effective") << cfg.dump();
  std::ofstream(fs::path(out_dir) / "config.reference")
      << Config::reference_text();

  Trainer trainer(cfg, dataset.size());
  if (!resume_from.empty()) trainer.load_checkpoint(resume_from);

  const int64_t t0 = trainer.curriculum().t;
  const int64_t total = trainer.total_iters();
  const TrainConfig& tc = trainer.train_config();

  std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl",
                        resume_from.empty() ? std::ios::trunc
                                            : std::ios::app);
  if (!metrics)
    throw std::runtime_error("cannot open metrics log in " + out_dir);

  const std::string final_dir = (fs::path(out_dir) / "checkpoint").string();
  if (t0 >= total) {
    trainer.save_checkpoint(final_dir);
    return final_dir;
  }

  BatchPipeline pipeline(dataset, trainer.aug_config(), tc.seed,
                         tc.batch_size, t0, total, tc.workers, tc.prefetch);
  for (int64_t t = t0; t < total; ++t) {
    const SampleBatch batch = pipeline.next();
    const StepReport report = trainer.train_step(batch);
    metrics << report.to_json() << "\n";
    metrics.flush();
    if (tc.checkpoint_interval > 0 && (t + 1) % tc.checkpoint_interval == 0 &&
        t + 1 < total) {
      std::ostringstream name;
      name << "ckpt-" << std::setw(6) << std::setfill('0') << (t + 1);
      trainer.save_checkpoint((fs::path(out_dir) / name.str()).string());
    }
  }
  trainer.save_checkpoint(final_dir);
  return final_dir;
}

std::unique_ptr<Trainer> load_trainer(const std::string& checkpoint_dir,
                                      Config* cfg_out) {
  // The effective config lives next to the checkpoint (run directory) or,
  // for interval checkpoints, one level up.
  fs::path cfg_path = fs::path(checkpoint_dir) / "config.effective";
  if (!fs::exists(cfg_path))
    cfg_path = fs::path(checkpoint_dir).parent_path() / "config.effective";
  if (!fs::exists(cfg_path))
    throw std::runtime_error("cannot find config.effective near " +
                             checkpoint_dir);
  Config cfg = Config::from_file(cfg_path.string());
  if (cfg_out) *cfg_out = cfg;
  auto trainer = std::make_unique<Trainer>(cfg, /*dataset_size=*/1);
  trainer->load_checkpoint(checkpoint_dir);
  return trainer;
}

}  // namespace ccop
