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

#include "ccop/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "ccop/datapipe.hpp"
#include "ccop/evalkit.hpp"
#include "ccop/rng.hpp"
#include "ccop/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ccop {

namespace {

struct CommonOpts {
  std::string config_path;
  int64_t seed = -1;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value)");
    cmd->add_option("--seed", seed, "master seed override");
    cmd->add_option("--set", sets, "extra key=value overrides")
        ->expected(-1);
  }

  Config resolve() const {
    Config cfg = config_path.empty() ? Config::defaults()
                                     : Config::from_file(config_path);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("--set expects key=value, got: " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed >= 0) cfg.set("train.seed", std::to_string(seed));
    return cfg;
  }
};

std::vector<std::string> list_images(const std::string& dir) {
  static const std::vector<std::string> kExts = {".png", ".jpg", ".jpeg",
                                                 ".bmp", ".ppm", ".pgm"};
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (std::find(kExts.begin(), kExts.end(), ext) != kExts.end())
      paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw std::runtime_error("no images found in " + dir);
  return paths;
}

// ---------------------------------------------------------------------------

int run_propose(const CommonOpts& common, const std::string& images_dir,
                const std::string& out_path, int random_count, int workers) {
  const Config cfg = common.resolve();
  const ProposalConfig pcfg = ProposalConfig::from(cfg);
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed"));
  const std::vector<std::string> paths = list_images(images_dir);

  const char* cache_env = std::getenv("CCOP_CACHE");
  const std::string cache_dir = cache_env ? cache_env : "";
  if (!cache_dir.empty()) fs::create_directories(cache_dir);

  std::vector<ProposalSet> sets(paths.size());
  std::atomic<size_t> next{0};
  auto work = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= paths.size()) return;
      const std::string id = fs::path(paths[i]).stem().string();
      std::string cache_file;
      if (!cache_dir.empty() && random_count <= 0) {
        std::ostringstream key;
        key << "propose-" << std::hex
            << hash_tag(paths[i] + "|" + std::to_string(cfg.hash()))
            << ".json";
        cache_file = (fs::path(cache_dir) / key.str()).string();
        if (fs::exists(cache_file)) {
          auto cached = load_proposals(cache_file);
          if (cached.count(id)) {
            sets[i] = cached.at(id);
            continue;
          }
        }
      }
      const Image img = load_image(paths[i]);
      sets[i] = random_count > 0
                    ? random_boxes(img.width, img.height, random_count,
                                   derive_seed(seed, "random-boxes", i), pcfg)
                    : propose_boxes(img, pcfg, id);
      sets[i].image_id = id;
      if (!cache_file.empty()) save_proposals({sets[i]}, cache_file);
    }
  };
  std::vector<std::thread> pool;
  const int n_workers = std::max(1, workers);
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  save_proposals(sets, out_path);
  std::cout << "wrote " << sets.size() << " records to " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_pretrain(const CommonOpts& common, bool synthetic,
                 const std::string& proposals_path,
                 const std::string& images_dir, const std::string& out_dir,
                 const std::string& resume) {
  const Config cfg = common.resolve();
  std::unique_ptr<Dataset> ds;
  if (synthetic) {
    ds = std::make_unique<SyntheticDataset>(
        static_cast<uint64_t>(cfg.get_int("train.seed")),
        cfg.get_int("synth.train_scenes"), SynthConfig::from(cfg),
        ProposalConfig::from(cfg), "train");
  } else {
    if (proposals_path.empty() || images_dir.empty())
      throw std::runtime_error(
          "pretrain needs --synthetic or both --images and --proposals");
    ds = std::make_unique<FolderDataset>(images_dir, proposals_path);
  }
  const std::string ckpt = train_loop(*ds, cfg, out_dir, resume);
  std::cout << "final checkpoint: " << ckpt << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

std::vector<LabeledEmbedding> embeddings_from_flags(
    const CommonOpts& common, const std::string& ckpt,
    const std::string& which, bool synthetic, int scenes,
    const std::string& images_dir, const std::string& proposals_path) {
  Config cfg;
  auto trainer = load_trainer(ckpt, &cfg);
  Config effective = common.resolve();
  // Evaluation follows the run's architecture; data options come from the
  // command line config.
  const AugConfig aug = AugConfig::from(cfg);
  const EmbeddingKind kind = which == "backbone" ? EmbeddingKind::kBackbone
                                                 : EmbeddingKind::kPrediction;
  std::vector<EvalItem> items;
  if (synthetic) {
    items = synthetic_eval_items(
        static_cast<uint64_t>(effective.get_int("train.seed")), scenes,
        SynthConfig::from(cfg));
  } else {
    if (images_dir.empty() || proposals_path.empty())
      throw std::runtime_error(
          "need --synthetic or both --images and --proposals");
    FolderDataset ds(images_dir, proposals_path);
    for (int64_t i = 0; i < ds.size(); ++i) {
      EvalItem item;
      item.image = ds.image(i);
      item.image_id = ds.id(i);
      for (const Proposal& p : ds.proposals(i).proposals)
        item.objects.emplace_back(-1, p.box);
      items.push_back(std::move(item));
    }
  }
  return compute_embeddings(trainer->query_encoder(), items, kind, aug);
}

int run_eval_knn(const CommonOpts& common, const std::string& ckpt,
                 const std::string& data, int scenes,
                 const std::string& topk_csv, const std::string& which) {
  std::vector<LabeledEmbedding> items;
  if (data == "synthetic") {
    items = embeddings_from_flags(common, ckpt, which, true, scenes, "", "");
  } else {
    items = load_embeddings(data);
  }
  normalize_embeddings(items);
  std::vector<int> topk;
  {
    std::istringstream is(topk_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) topk.push_back(std::stoi(tok));
  }
  if (topk.empty()) throw std::runtime_error("--topk list is empty");
  for (int k : topk) {
    const double r = knn_recall(items, k);
    std::ostringstream line;
    line.precision(4);
    line << std::fixed << "top" << k << " recall = " << r;
    std::cout << line.str() << "\n";
  }
  return 0;
}

int run_export(const CommonOpts& common, const std::string& ckpt,
               const std::string& which, const std::string& out_path,
               bool synthetic, int scenes, const std::string& images_dir,
               const std::string& proposals_path) {
  if (which != "prediction" && which != "backbone")
    throw std::runtime_error("--which must be prediction or backbone");
  const auto items = embeddings_from_flags(common, ckpt, which, synthetic,
                                           scenes, images_dir,
                                           proposals_path);
  save_embeddings(items, out_path);
  std::cout << "wrote " << items.size() << " embeddings to " << out_path
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_diagnose(const CommonOpts& common, const std::string& run_dir,
                 const std::string& out_path) {
  // Accept a run directory (with checkpoint/ and optional ckpt-*/) or a
  // single checkpoint directory plus siblings.
  std::vector<std::string> ckpts;
  const fs::path root(run_dir);
  if (fs::exists(root / "state.json")) {
    ckpts.push_back(root.string());
  } else {
    std::vector<std::string> numbered;
    for (const auto& e : fs::directory_iterator(root)) {
      if (!e.is_directory()) continue;
      const std::string name = e.path().filename().string();
      if (name.rfind("ckpt-", 0) == 0 && fs::exists(e.path() / "state.json"))
        numbered.push_back(e.path().string());
    }
    std::sort(numbered.begin(), numbered.end());
    ckpts = std::move(numbered);
    if (fs::exists(root / "checkpoint" / "state.json"))
      ckpts.push_back((root / "checkpoint").string());
  }
  if (ckpts.size() < 2)
    throw std::runtime_error(
        "diagnose-grad needs at least 2 checkpoints (train with "
        "train.checkpoint_interval > 0); found " +
        std::to_string(ckpts.size()));

  const Config cli_cfg = common.resolve();
  const uint64_t probe_seed =
      static_cast<uint64_t>(cli_cfg.get_int("train.seed"));

  std::vector<SaturationProbe> probes;
  for (const std::string& ck : ckpts) {
    Config cfg;
    auto trainer = load_trainer(ck, &cfg);
    const AugConfig aug = AugConfig::from(cfg);
    const SynthConfig scfg = SynthConfig::from(cfg);
    SaturationProbe probe;
    probe.label = fs::path(ck).filename().string() + "@t=" +
                  std::to_string(trainer->curriculum().t);

    // Fixed probe batch: image-level positive pairs from synthetic scenes.
    const int kPairs = 8;
    for (int i = 0; i < kPairs; ++i) {
      const SynthScene scene =
          synth_scene(derive_seed(probe_seed, "probe-scene", i), scfg);
      ProposalSet empty;
      empty.width = scene.image.width;
      empty.height = scene.image.height;
      const ViewPair pair = make_pair(
          scene.image, empty, derive_seed(probe_seed, "probe-q", i),
          derive_seed(probe_seed, "probe-k", i), aug);
      const int s = aug.view_size;
      Tensor<float> xq({1, 3, s, s}), xk({1, 3, s, s});
      std::copy(pair.query_view.image.data.begin(),
                pair.query_view.image.data.end(), xq.data.begin());
      std::copy(pair.key_view.image.data.begin(),
                pair.key_view.image.data.end(), xk.data.begin());
      auto fq = trainer->query_encoder().encode(xq, BnMode::kEval, false);
      auto fk = trainer->key_encoder().encode(xk, BnMode::kEval, false);
      Tensor<float> zq = trainer->query_encoder().embed_image(fq, false);
      Tensor<float> zk = trainer->key_encoder().embed_image(fk, false);
      Vec vq(zq.dim(1)), vk(zk.dim(1));
      for (int j = 0; j < zq.dim(1); ++j) {
        vq[j] = zq.at(0, j);
        vk[j] = zk.at(0, j);
      }
      probe.pairs.emplace_back(vq, vk);
    }
    const auto& negs = trainer->image_queue().negatives();
    const size_t cap = std::min<size_t>(negs.size(), 1024);
    probe.negatives.assign(negs.begin(), negs.begin() + cap);
    probes.push_back(std::move(probe));
  }

  const std::string table = saturation_table(grad_saturation_report(probes));
  std::cout << table;
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    os << table;
  }
  return 0;
}

// ---------------------------------------------------------------------------

int run_query_box(const CommonOpts& common, const std::string& ckpt,
                  const std::string& query_path, const std::string& box_csv,
                  const std::string& key_path, const std::string& out_dir) {
  Config cfg;
  auto trainer = load_trainer(ckpt, &cfg);
  const AugConfig aug = AugConfig::from(cfg);

  std::vector<double> vals;
  {
    std::istringstream is(box_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) vals.push_back(std::stod(tok));
  }
  if (vals.size() != 4)
    throw std::runtime_error("--box expects x,y,w,h");
  const Box box{vals[0], vals[1], vals[2], vals[3]};
  if (!box.valid()) throw std::runtime_error("--box is degenerate");

  const Image query_img = load_image(query_path);
  const Image key_img = load_image(key_path);
  const Heatmaps maps =
      box_query_heatmap(trainer->query_encoder(), query_img, box, key_img,
                        aug);

  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "config.effective") << cfg.dump();
  (void)common;
  for (int level = 0; level < 4; ++level) {
    const auto [h, w] = maps.sizes[level];
    const std::string stem = "heatmap-p" + std::to_string(level + 2);
    std::ofstream csv(fs::path(out_dir) / (stem + ".csv"));
    csv.precision(6);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (x) csv << ",";
        csv << maps.maps[level][static_cast<size_t>(y) * w + x];
      }
      csv << "\n";
    }
    save_grid_image(maps.maps[level], w, h,
                    (fs::path(out_dir) / (stem + ".png")).string());
  }
  std::cout << "wrote heatmaps to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_synth_demo(const CommonOpts& common, const std::string& out_dir,
                   int count) {
  const Config cfg = common.resolve();
  const SynthConfig scfg = SynthConfig::from(cfg);
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed"));
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "config.effective") << cfg.dump();

  std::vector<ProposalSet> gt_sets;
  std::ofstream gt(fs::path(out_dir) / "ground_truth.jsonl");
  for (int i = 0; i < count; ++i) {
    const SynthScene scene = synth_scene(derive_seed(seed, "demo", i), scfg);
    const std::string id = "scene-" + std::to_string(i);
    save_image(scene.image, (fs::path(out_dir) / (id + ".png")).string());
    nlohmann::ordered_json rec;
    rec["image_id"] = id;
    rec["width"] = scene.image.width;
    rec["height"] = scene.image.height;
    auto boxes = nlohmann::json::array();
    auto labels = nlohmann::json::array();
    for (const auto& [cls, b] : scene.objects) {
      boxes.push_back({b.x, b.y, b.w, b.h});
      labels.push_back(cls);
    }
    rec["boxes"] = std::move(boxes);
    rec["labels"] = std::move(labels);
    gt << rec.dump() << "\n";
  }
  std::cout << "wrote " << count << " scenes to " << out_dir << "\n";
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"object-level contrastive pre-training toolkit"};
  app.require_subcommand(1);

  // propose
  auto* propose = app.add_subcommand(
      "propose", "generate region proposals for a directory of images");
  CommonOpts propose_common;
  std::string pr_images, pr_out;
  int pr_random = 0, pr_workers = 1;
  propose->add_option("--images", pr_images, "image directory")->required();
  propose->add_option("--out", pr_out, "output proposals file")->required();
  propose->add_option("--random", pr_random,
                      "emit N random boxes per image instead");
  propose->add_option("--workers", pr_workers, "per-image fan-out");
  propose_common.attach(propose);

  // pretrain
  auto* pretrain =
      app.add_subcommand("pretrain", "run contrastive pre-training");
  CommonOpts pretrain_common;
  std::string tr_proposals, tr_images, tr_out, tr_resume;
  bool tr_synth = false;
  pretrain->add_flag("--synthetic", tr_synth, "train on synthetic scenes");
  pretrain->add_option("--proposals", tr_proposals, "proposals file");
  pretrain->add_option("--images", tr_images, "image directory");
  pretrain->add_option("--out", tr_out, "output directory")->required();
  pretrain->add_option("--resume", tr_resume, "checkpoint to resume from");
  pretrain_common.attach(pretrain);

  // eval-knn
  auto* evalknn =
      app.add_subcommand("eval-knn", "kNN recall of object embeddings");
  CommonOpts evalknn_common;
  std::string ek_ckpt, ek_data = "synthetic", ek_topk = "1,5,10",
              ek_which = "prediction";
  int ek_scenes = 100;
  evalknn->add_option("--ckpt", ek_ckpt, "checkpoint directory")->required();
  evalknn->add_option("--data", ek_data,
                      "'synthetic' or an embeddings file path");
  evalknn->add_option("--scenes", ek_scenes, "held-out synthetic scenes");
  evalknn->add_option("--topk", ek_topk, "comma-separated k values");
  evalknn->add_option("--which", ek_which, "prediction|backbone");
  evalknn_common.attach(evalknn);

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings",
                                 "write object embeddings to a file");
  CommonOpts exp_common;
  std::string ex_ckpt, ex_which = "prediction", ex_out, ex_images,
              ex_proposals;
  bool ex_synth = false;
  int ex_scenes = 100;
  exp->add_option("--ckpt", ex_ckpt, "checkpoint directory")->required();
  exp->add_option("--which", ex_which, "prediction|backbone");
  exp->add_option("--out", ex_out, "output file")->required();
  exp->add_flag("--synthetic", ex_synth, "use held-out synthetic scenes");
  exp->add_option("--scenes", ex_scenes, "synthetic scene count");
  exp->add_option("--images", ex_images, "image directory");
  exp->add_option("--proposals", ex_proposals, "proposals file");
  exp_common.attach(exp);

  // diagnose-grad
  auto* diag = app.add_subcommand(
      "diagnose-grad", "positive-pair gradient saturation across checkpoints");
  CommonOpts diag_common;
  std::string dg_ckpt, dg_out;
  diag->add_option("--ckpt", dg_ckpt, "run or checkpoint directory")
      ->required();
  diag->add_option("--out", dg_out, "optional output table path");
  diag_common.attach(diag);

  // query-box
  auto* qb = app.add_subcommand("query-box",
                                "cross-correlation heatmaps for a box query");
  CommonOpts qb_common;
  std::string qb_ckpt, qb_query, qb_box, qb_key, qb_out;
  qb->add_option("--ckpt", qb_ckpt, "checkpoint directory")->required();
  qb->add_option("--query", qb_query, "query image path")->required();
  qb->add_option("--box", qb_box, "query box as x,y,w,h")->required();
  qb->add_option("--key", qb_key, "key image path")->required();
  qb->add_option("--out", qb_out, "output directory")->required();
  qb_common.attach(qb);

  // synth-demo
  auto* demo =
      app.add_subcommand("synth-demo", "materialize synthetic scenes");
  CommonOpts demo_common;
  std::string sd_out;
  int sd_count = 8;
  demo->add_option("--out", sd_out, "output directory")->required();
  demo->add_option("--count", sd_count, "number of scenes");
  demo_common.attach(demo);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("ccop");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << std::flush;
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    for (const auto* sub : app.get_subcommands())
      std::cerr << sub->help() << std::flush;
    if (app.get_subcommands().empty())
      std::cerr << app.help() << std::flush;
    return 1;
  }

  try {
    if (propose->parsed())
      return run_propose(propose_common, pr_images, pr_out, pr_random,
                         pr_workers);
    if (pretrain->parsed())
      return run_pretrain(pretrain_common, tr_synth, tr_proposals, tr_images,
                          tr_out, tr_resume);
    if (evalknn->parsed())
      return run_eval_knn(evalknn_common, ek_ckpt, ek_data, ek_scenes,
                          ek_topk, ek_which);
    if (exp->parsed())
      return run_export(exp_common, ex_ckpt, ex_which, ex_out, ex_synth,
                        ex_scenes, ex_images, ex_proposals);
    if (diag->parsed()) return run_diagnose(diag_common, dg_ckpt, dg_out);
    if (qb->parsed())
      return run_query_box(qb_common, qb_ckpt, qb_query, qb_box, qb_key,
                           qb_out);
    if (demo->parsed()) return run_synth_demo(demo_common, sd_out, sd_count);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ccop
