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

#ifndef CCOP_NETWORK_HPP_
#define CCOP_NETWORK_HPP_

#include <array>
#include <cstring>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "ccop/config.hpp"
#include "ccop/geometry.hpp"
#include "ccop/nn.hpp"
#include "ccop/tensor.hpp"

namespace ccop {

struct NetworkConfig {
  std::string backbone = "tiny";
  std::vector<int> widths = {16, 32, 64, 128, 256};  // tiny: stem, C2..C5
  int fpn_channels = 256;
  int embed_dim = 128;
  int mlp_hidden = 2048;
  int roi_size = 7;
  double bn_momentum = 0.1;

  static NetworkConfig from(const Config& cfg);
};

/// FPN level for a box, the canonical k0=4 assignment:
/// clamp(floor(4 + log2(sqrt(w*h)/224)), 2, 5).
int assign_level(const Box& b);

inline int level_stride(int level) { return 4 << (level - 2); }

/// A box in some batch element's view coordinates.
struct Roi {
  int n = 0;
  Box box;
};

template <typename T>
struct PyramidFeatures {
  std::array<Tensor<T>, 4> p;  // P2..P5, strides 4..32
  Tensor<T> c5;                // deepest backbone map, stride 32
};

// ---------------------------------------------------------------------------
// RoIAlign: bilinear sampling at 2x2 points per output cell, averaged.
// Sample coordinates are clamped to the map, so a constant feature map pools
// to the same constant for any box.

namespace detail {
template <typename T>
inline void bilinear_coeffs(int h, int w, double cy, double cx, int idx[4],
                            T wgt[4]) {
  double iy = cy - 0.5, ix = cx - 0.5;
  if (iy < 0) iy = 0;
  if (ix < 0) ix = 0;
  if (iy > h - 1) iy = h - 1;
  if (ix > w - 1) ix = w - 1;
  const int y0 = static_cast<int>(iy), x0 = static_cast<int>(ix);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const T fy = static_cast<T>(iy - y0), fx = static_cast<T>(ix - x0);
  idx[0] = y0 * w + x0;
  idx[1] = y0 * w + x1;
  idx[2] = y1 * w + x0;
  idx[3] = y1 * w + x1;
  wgt[0] = (T(1) - fy) * (T(1) - fx);
  wgt[1] = (T(1) - fy) * fx;
  wgt[2] = fy * (T(1) - fx);
  wgt[3] = fy * fx;
}
}  // namespace detail

/// fmap: [N, C, H, W]; box in the level's coordinate frame (already divided
/// by the stride); out: buffer of C*S*S.
template <typename T>
void roi_align(const Tensor<T>& fmap, int n, const Box& box, int out_size,
               T* out) {
  const int c = fmap.dim(1), h = fmap.dim(2), w = fmap.dim(3);
  const double bin_h = box.h / out_size, bin_w = box.w / out_size;
  const int64_t plane = static_cast<int64_t>(h) * w;
  const double offs[2] = {0.25, 0.75};
  for (int oy = 0; oy < out_size; ++oy)
    for (int ox = 0; ox < out_size; ++ox) {
      int idx[2][2][4];
      T wgt[2][2][4];
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double cy = box.y + (oy + offs[sy]) * bin_h;
          const double cx = box.x + (ox + offs[sx]) * bin_w;
          detail::bilinear_coeffs(h, w, cy, cx, idx[sy][sx], wgt[sy][sx]);
        }
      for (int ch = 0; ch < c; ++ch) {
        const T* p = fmap.data.data() + (n * c + ch) * plane;
        double acc = 0.0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx)
            for (int q = 0; q < 4; ++q)
              acc += double(wgt[sy][sx][q]) * p[idx[sy][sx][q]];
        out[(ch * out_size + oy) * out_size + ox] =
            static_cast<T>(acc / 4.0);
      }
    }
}

template <typename T>
void roi_align_backward(Tensor<T>& dfmap, int n, const Box& box, int out_size,
                        const T* dout) {
  const int c = dfmap.dim(1), h = dfmap.dim(2), w = dfmap.dim(3);
  const double bin_h = box.h / out_size, bin_w = box.w / out_size;
  const int64_t plane = static_cast<int64_t>(h) * w;
  const double offs[2] = {0.25, 0.75};
  for (int oy = 0; oy < out_size; ++oy)
    for (int ox = 0; ox < out_size; ++ox) {
      int idx[2][2][4];
      T wgt[2][2][4];
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double cy = box.y + (oy + offs[sy]) * bin_h;
          const double cx = box.x + (ox + offs[sx]) * bin_w;
          detail::bilinear_coeffs(h, w, cy, cx, idx[sy][sx], wgt[sy][sx]);
        }
      for (int ch = 0; ch < c; ++ch) {
        T* p = dfmap.data.data() + (n * c + ch) * plane;
        const T g = dout[(ch * out_size + oy) * out_size + ox] / T(4);
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx)
            for (int q = 0; q < 4; ++q)
              p[idx[sy][sx][q]] += g * wgt[sy][sx][q];
      }
    }
}

// ---------------------------------------------------------------------------

template <typename T>
void tensor_add(Tensor<T>& dst, const Tensor<T>& src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::array<Tensor<T>, 4> forward(const Tensor<T>& x, BnMode mode,
                                           bool keep) = 0;
  virtual void backward(std::array<Tensor<T>, 4> dc) = 0;
  virtual void init(Rng& rng) = 0;
  virtual void collect(std::vector<Param<T>*>& ps) = 0;
  virtual void collect_buffers(std::vector<Buffer<T>*>& bs) = 0;
  virtual std::array<int, 4> channels() const = 0;
};

/// Five conv-bn-relu stages, each stride 2: C2..C5 at strides 4..32.
template <typename T>
class TinyBackbone : public Backbone<T> {
 public:
  TinyBackbone(const std::vector<int>& widths, double bn_momentum) {
    if (widths.size() != 5)
      throw std::invalid_argument("tiny backbone needs 5 stage widths");
    widths_ = widths;
    stages_.reserve(5);
    int cin = 3;
    for (int i = 0; i < 5; ++i) {
      stages_.emplace_back("backbone.stage" + std::to_string(i), cin,
                           widths[i], 3, 2, 1, bn_momentum);
      cin = widths[i];
    }
  }

  std::array<Tensor<T>, 4> forward(const Tensor<T>& x, BnMode mode,
                                   bool keep) override {
    Tensor<T> a = stages_[0].forward(x, mode, keep);
    std::array<Tensor<T>, 4> c;
    for (int i = 0; i < 4; ++i) {
      a = stages_[i + 1].forward(a, mode, keep);
      c[i] = a;
    }
    return c;
  }

  void backward(std::array<Tensor<T>, 4> dc) override {
    Tensor<T> d = std::move(dc[3]);
    for (int i = 3; i >= 1; --i) {
      Tensor<T> dprev = stages_[i + 1].backward(d);
      tensor_add(dprev, dc[i - 1]);
      d = std::move(dprev);
    }
    Tensor<T> dstem = stages_[1].backward(d);
    stages_[0].backward(dstem);
  }

  void init(Rng& rng) override {
    for (auto& s : stages_) s.init(rng);
  }
  void collect(std::vector<Param<T>*>& ps) override {
    for (auto& s : stages_) s.collect(ps);
  }
  void collect_buffers(std::vector<Buffer<T>*>& bs) override {
    for (auto& s : stages_) s.collect_buffers(bs);
  }
  std::array<int, 4> channels() const override {
    return {widths_[1], widths_[2], widths_[3], widths_[4]};
  }

 private:
  std::vector<int> widths_;
  std::vector<ConvBnRelu<T>> stages_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Bottleneck {
 public:
  Bottleneck(std::string name, int cin, int mid, int cout, int stride,
             double bnm)
      : conv1_(name + ".conv1", cin, mid, 1, 1, 0, false),
        bn1_(name + ".bn1", mid, bnm),
        conv2_(name + ".conv2", mid, mid, 3, stride, 1, false),
        bn2_(name + ".bn2", mid, bnm),
        conv3_(name + ".conv3", mid, cout, 1, 1, 0, false),
        bn3_(name + ".bn3", cout, bnm) {
    if (stride != 1 || cin != cout) {
      down_conv_ = std::make_unique<Conv2d<T>>(name + ".down", cin, cout, 1,
                                               stride, 0, false);
      down_bn_ = std::make_unique<BatchNorm2d<T>>(name + ".down_bn", cout,
                                                  bnm);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, bool keep) {
    Tensor<T> y = relu1_.forward(bn1_.forward(conv1_.forward(x, keep), mode,
                                              keep),
                                 keep);
    y = relu2_.forward(bn2_.forward(conv2_.forward(y, keep), mode, keep),
                       keep);
    y = bn3_.forward(conv3_.forward(y, keep), mode, keep);
    Tensor<T> idp =
        down_conv_ ? down_bn_->forward(down_conv_->forward(x, keep), mode,
                                       keep)
                   : x;
    tensor_add(y, idp);
    return relu_out_.forward(y, keep);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dsum = relu_out_.backward(dy);
    Tensor<T> dmain = conv1_.backward(bn1_.backward(relu1_.backward(
        conv2_.backward(bn2_.backward(relu2_.backward(
            conv3_.backward(bn3_.backward(dsum))))))));
    if (down_conv_) {
      Tensor<T> dskip = down_conv_->backward(down_bn_->backward(dsum));
      tensor_add(dmain, dskip);
    } else {
      tensor_add(dmain, dsum);
    }
    return dmain;
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    if (down_conv_) down_conv_->init(rng);
  }
  void collect(std::vector<Param<T>*>& ps) {
    conv1_.collect(ps);
    bn1_.collect(ps);
    conv2_.collect(ps);
    bn2_.collect(ps);
    conv3_.collect(ps);
    bn3_.collect(ps);
    if (down_conv_) {
      down_conv_->collect(ps);
      down_bn_->collect(ps);
    }
  }
  void collect_buffers(std::vector<Buffer<T>*>& bs) {
    bn1_.collect_buffers(bs);
    bn2_.collect_buffers(bs);
    bn3_.collect_buffers(bs);
    if (down_bn_) down_bn_->collect_buffers(bs);
  }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  Conv2d<T> conv3_;
  BatchNorm2d<T> bn3_;
  std::unique_ptr<Conv2d<T>> down_conv_;
  std::unique_ptr<BatchNorm2d<T>> down_bn_;
  Relu<T> relu1_, relu2_, relu_out_;
};

template <typename T>
class ResNet50Backbone : public Backbone<T> {
 public:
  explicit ResNet50Backbone(double bnm)
      : stem_conv_("backbone.stem.conv", 3, 64, 7, 2, 3, false),
        stem_bn_("backbone.stem.bn", 64, bnm),
        pool_(3, 2, 1) {
    const int blocks[4] = {3, 4, 6, 3};
    const int mids[4] = {64, 128, 256, 512};
    int cin = 64;
    for (int s = 0; s < 4; ++s) {
      const int cout = mids[s] * 4;
      for (int b = 0; b < blocks[s]; ++b) {
        const int stride = (b == 0 && s > 0) ? 2 : 1;
        stages_[s].emplace_back("backbone.res" + std::to_string(s + 2) + "." +
                                    std::to_string(b),
                                cin, mids[s], cout, stride, bnm);
        cin = cout;
      }
    }
  }

  std::array<Tensor<T>, 4> forward(const Tensor<T>& x, BnMode mode,
                                   bool keep) override {
    Tensor<T> a = stem_relu_.forward(
        stem_bn_.forward(stem_conv_.forward(x, keep), mode, keep), keep);
    a = pool_.forward(a, keep);
    std::array<Tensor<T>, 4> c;
    for (int s = 0; s < 4; ++s) {
      for (auto& blk : stages_[s]) a = blk.forward(a, mode, keep);
      c[s] = a;
    }
    return c;
  }

  void backward(std::array<Tensor<T>, 4> dc) override {
    Tensor<T> d = std::move(dc[3]);
    for (int s = 3; s >= 0; --s) {
      for (int b = static_cast<int>(stages_[s].size()) - 1; b >= 0; --b)
        d = stages_[s][b].backward(d);
      if (s > 0) tensor_add(d, dc[s - 1]);
    }
    d = pool_.backward(d);
    stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(d)));
  }

  void init(Rng& rng) override {
    stem_conv_.init(rng);
    for (auto& st : stages_)
      for (auto& blk : st) blk.init(rng);
  }
  void collect(std::vector<Param<T>*>& ps) override {
    stem_conv_.collect(ps);
    stem_bn_.collect(ps);
    for (auto& st : stages_)
      for (auto& blk : st) blk.collect(ps);
  }
  void collect_buffers(std::vector<Buffer<T>*>& bs) override {
    stem_bn_.collect_buffers(bs);
    for (auto& st : stages_)
      for (auto& blk : st) blk.collect_buffers(bs);
  }
  std::array<int, 4> channels() const override {
    return {256, 512, 1024, 2048};
  }

 private:
  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  Relu<T> stem_relu_;
  MaxPool2d<T> pool_;
  std::array<std::vector<Bottleneck<T>>, 4> stages_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Fpn {
 public:
  Fpn(const std::array<int, 4>& cin, int fch) : fch_(fch) {
    for (int i = 0; i < 4; ++i) {
      lateral_.emplace_back("fpn.lateral" + std::to_string(i + 2), cin[i],
                            fch, 1, 1, 0, true);
      smooth_.emplace_back("fpn.smooth" + std::to_string(i + 2), fch, fch, 3,
                           1, 1, true);
    }
  }

  std::array<Tensor<T>, 4> forward(const std::array<Tensor<T>, 4>& c,
                                   bool keep) {
    std::array<Tensor<T>, 4> m;
    m[3] = lateral_[3].forward(c[3], keep);
    for (int i = 2; i >= 0; --i) {
      m[i] = lateral_[i].forward(c[i], keep);
      tensor_add(m[i], upsample_nearest2x(m[i + 1]));
    }
    std::array<Tensor<T>, 4> p;
    for (int i = 0; i < 4; ++i) p[i] = smooth_[i].forward(m[i], keep);
    return p;
  }

  std::array<Tensor<T>, 4> backward(const std::array<Tensor<T>, 4>& dp) {
    std::array<Tensor<T>, 4> dc;
    Tensor<T> carry;  // gradient flowing up the top-down pathway
    for (int i = 0; i < 4; ++i) {
      Tensor<T> dm = smooth_[i].backward(dp[i]);
      if (i > 0) tensor_add(dm, carry);
      if (i < 3) carry = upsample_nearest2x_backward(dm);
      dc[i] = lateral_[i].backward(dm);
    }
    return dc;
  }

  void init(Rng& rng) {
    for (auto& l : lateral_) l.init(rng);
    for (auto& s : smooth_) s.init(rng);
  }
  void collect(std::vector<Param<T>*>& ps) {
    for (auto& l : lateral_) l.collect(ps);
    for (auto& s : smooth_) s.collect(ps);
  }
  int channels() const { return fch_; }

 private:
  std::vector<Conv2d<T>> lateral_, smooth_;
  int fch_;
};

// ---------------------------------------------------------------------------

/// Two-layer MLP head over pooled features, L2-normalized output.
template <typename T>
class MlpHead {
 public:
  MlpHead(std::string name, int in, int hidden, int out)
      : l1_(name + ".fc1", in, hidden), l2_(name + ".fc2", hidden, out) {}

  Tensor<T> forward(const Tensor<T>& pooled, bool keep) {
    return norm_.forward(
        l2_.forward(relu_.forward(l1_.forward(pooled, keep), keep), keep),
        keep);
  }
  Tensor<T> backward(const Tensor<T>& dz) {
    return l1_.backward(relu_.backward(l2_.backward(norm_.backward(dz))));
  }
  void init(Rng& rng) {
    l1_.init(rng);
    l2_.init(rng);
  }
  void collect(std::vector<Param<T>*>& ps) {
    l1_.collect(ps);
    l2_.collect(ps);
  }

 private:
  Linear<T> l1_, l2_;
  Relu<T> relu_;
  L2Normalize<T> norm_;
};

// ---------------------------------------------------------------------------

/// Query/key encoder: backbone + FPN (object path) + C5 image path, with
/// two separate MLP heads. Forwarding with keep=false is the no-gradient
/// contract used for the key branch and for evaluation.
template <typename T>
class Encoder {
 public:
  explicit Encoder(const NetworkConfig& cfg) : cfg_(cfg) {
    if (cfg.backbone == "tiny") {
      backbone_ = std::make_unique<TinyBackbone<T>>(cfg.widths,
                                                    cfg.bn_momentum);
    } else if (cfg.backbone == "resnet50") {
      backbone_ = std::make_unique<ResNet50Backbone<T>>(cfg.bn_momentum);
    } else {
      throw std::invalid_argument("unknown backbone: " + cfg.backbone);
    }
    fpn_ = std::make_unique<Fpn<T>>(backbone_->channels(), cfg.fpn_channels);
    image_head_ = std::make_unique<MlpHead<T>>(
        "image_head", backbone_->channels()[3], cfg.mlp_hidden,
        cfg.embed_dim);
    object_head_ = std::make_unique<MlpHead<T>>(
        "object_head", cfg.fpn_channels, cfg.mlp_hidden, cfg.embed_dim);
  }

  void init(uint64_t seed) {
    Rng rng(derive_seed(seed, "encoder-init", 0));
    backbone_->init(rng);
    fpn_->init(rng);
    image_head_->init(rng);
    object_head_->init(rng);
  }

  PyramidFeatures<T> encode(const Tensor<T>& images, BnMode mode, bool keep) {
    if (images.shape.size() != 4 || images.dim(1) != 3)
      throw std::invalid_argument("encode expects [N,3,H,W]");
    if (images.dim(2) % 32 != 0 || images.dim(3) % 32 != 0)
      throw std::invalid_argument(
          "encode: spatial size must be divisible by 32");
    PyramidFeatures<T> out;
    auto c = backbone_->forward(images, mode, keep);
    out.c5 = c[3];
    out.p = fpn_->forward(c, keep);
    return out;
  }

  /// Global-average-pooled C5 -> image MLP -> unit-norm embeddings [N, D].
  Tensor<T> embed_image(const PyramidFeatures<T>& f, bool keep) {
    if (keep) {
      c5_h_ = f.c5.dim(2);
      c5_w_ = f.c5.dim(3);
    }
    return image_head_->forward(global_avg_pool(f.c5), keep);
  }

  /// Pre-MLP regional features: assign_level -> RoIAlign -> spatial
  /// average. Returns [R, fpn_channels], rows in roi order.
  Tensor<T> pool_objects(const PyramidFeatures<T>& f,
                         const std::vector<Roi>& rois) const {
    const int r = static_cast<int>(rois.size());
    const int fc = cfg_.fpn_channels, s = cfg_.roi_size;
    Tensor<T> pooled({r, fc});
    std::vector<T> patch(static_cast<size_t>(fc) * s * s);
    for (int i = 0; i < r; ++i) {
      const int level = assign_level(rois[i].box);
      const double stride = level_stride(level);
      const Box lb{rois[i].box.x / stride, rois[i].box.y / stride,
                   rois[i].box.w / stride, rois[i].box.h / stride};
      roi_align(f.p[level - 2], rois[i].n, lb, s, patch.data());
      for (int ch = 0; ch < fc; ++ch) {
        double acc = 0.0;
        for (int q = 0; q < s * s; ++q) acc += patch[ch * s * s + q];
        pooled.at(i, ch) = static_cast<T>(acc / (s * s));
      }
    }
    return pooled;
  }

  /// Per box: pooled regional feature -> object MLP -> unit norm.
  /// Output row order matches the roi order.
  Tensor<T> embed_objects(const PyramidFeatures<T>& f,
                          const std::vector<Roi>& rois, bool keep) {
    if (rois.empty()) {
      if (keep) roi_cache_.clear();
      return Tensor<T>({0, cfg_.embed_dim});
    }
    if (keep) roi_cache_ = rois;
    return object_head_->forward(pool_objects(f, rois), keep);
  }

  /// One backward for everything computed from the last keep=true forwards.
  /// dz_img: [N, D] or null; dz_obj: [R, D] or null (R matching the cached
  /// rois). Accumulates parameter gradients.
  void backward(const PyramidFeatures<T>& f, const Tensor<T>* dz_img,
                const Tensor<T>* dz_obj) {
    std::array<Tensor<T>, 4> dp;
    for (int i = 0; i < 4; ++i) dp[i] = Tensor<T>(f.p[i].shape);

    if (dz_obj && dz_obj->dim(0) > 0) {
      Tensor<T> dpooled = object_head_->backward(*dz_obj);
      const int fc = cfg_.fpn_channels, s = cfg_.roi_size;
      std::vector<T> dpatch(static_cast<size_t>(fc) * s * s);
      for (size_t i = 0; i < roi_cache_.size(); ++i) {
        const int level = assign_level(roi_cache_[i].box);
        const double stride = level_stride(level);
        const Box lb{roi_cache_[i].box.x / stride,
                     roi_cache_[i].box.y / stride,
                     roi_cache_[i].box.w / stride,
                     roi_cache_[i].box.h / stride};
        for (int ch = 0; ch < fc; ++ch) {
          const T g = dpooled.at(static_cast<int>(i), ch) / T(s * s);
          for (int q = 0; q < s * s; ++q) dpatch[ch * s * s + q] = g;
        }
        roi_align_backward(dp[level - 2], roi_cache_[i].n, lb, s,
                           dpatch.data());
      }
    }

    std::array<Tensor<T>, 4> dc = fpn_->backward(dp);
    if (dz_img) {
      Tensor<T> dgap = image_head_->backward(*dz_img);
      tensor_add(dc[3], global_avg_pool_backward(dgap, c5_h_, c5_w_));
    }
    backbone_->backward(std::move(dc));
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> ps;
    backbone_->collect(ps);
    fpn_->collect(ps);
    image_head_->collect(ps);
    object_head_->collect(ps);
    return ps;
  }

  std::vector<Buffer<T>*> buffers() {
    std::vector<Buffer<T>*> bs;
    backbone_->collect_buffers(bs);
    return bs;
  }

  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  std::unique_ptr<Backbone<T>> backbone_;
  std::unique_ptr<Fpn<T>> fpn_;
  std::unique_ptr<MlpHead<T>> image_head_, object_head_;
  std::vector<Roi> roi_cache_;
  int c5_h_ = 0, c5_w_ = 0;
};

// ---------------------------------------------------------------------------

/// theta_k <- m * theta_k + (1 - m) * theta_q, per parameter element.
template <typename T>
void ema_update(std::vector<Param<T>*>& key, std::vector<Param<T>*>& query,
                double m) {
  if (key.size() != query.size())
    throw std::invalid_argument("ema_update: parameter list size mismatch");
  for (size_t i = 0; i < key.size(); ++i) {
    if (!key[i]->value.same_shape(query[i]->value))
      throw std::invalid_argument("ema_update: shape mismatch at " +
                                  key[i]->name);
    const T mm = static_cast<T>(m);
    const T im = static_cast<T>(1.0 - m);
    T* k = key[i]->value.data.data();
    const T* q = query[i]->value.data.data();
    const int64_t n = key[i]->value.numel();
    for (int64_t j = 0; j < n; ++j) k[j] = mm * k[j] + im * q[j];
  }
}

/// Copies parameter values (and buffers via sync_buffers) from src to dst.
template <typename T>
void copy_params(std::vector<Param<T>*>& dst, std::vector<Param<T>*>& src) {
  for (size_t i = 0; i < dst.size(); ++i)
    dst[i]->value.data = src[i]->value.data;
}

template <typename T>
void sync_buffers(std::vector<Buffer<T>*>& dst,
                  std::vector<Buffer<T>*>& src) {
  for (size_t i = 0; i < dst.size(); ++i)
    dst[i]->value.data = src[i]->value.data;
}

// ---------------------------------------------------------------------------
// Binary parameter serialization; round-trips are bit-exact.

void write_tensor_file_header(std::ostream& os, uint32_t count);
uint32_t read_tensor_file_header(std::istream& is);
void write_named_tensor(std::ostream& os, const std::string& name,
                        const std::vector<int>& shape, const void* data,
                        size_t elem_size, int64_t numel);
void read_named_tensor(std::istream& is, std::string& name,
                       std::vector<int>& shape, std::vector<char>& raw,
                       size_t& elem_size);

template <typename T>
void save_params(std::ostream& os, std::vector<Param<T>*> ps,
                 std::vector<Buffer<T>*> bs) {
  write_tensor_file_header(os, static_cast<uint32_t>(ps.size() + bs.size()));
  for (auto* p : ps)
    write_named_tensor(os, p->name, p->value.shape, p->value.data.data(),
                       sizeof(T), p->value.numel());
  for (auto* b : bs)
    write_named_tensor(os, b->name, b->value.shape, b->value.data.data(),
                       sizeof(T), b->value.numel());
}

template <typename T>
void load_params(std::istream& is, std::vector<Param<T>*> ps,
                 std::vector<Buffer<T>*> bs) {
  const uint32_t count = read_tensor_file_header(is);
  if (count != ps.size() + bs.size())
    throw std::runtime_error("checkpoint: tensor count mismatch");
  auto read_into = [&](const std::string& want_name, std::vector<int>& shape,
                       std::vector<T>& data) {
    std::string name;
    std::vector<int> s;
    std::vector<char> raw;
    size_t elem = 0;
    read_named_tensor(is, name, s, raw, elem);
    if (name != want_name)
      throw std::runtime_error("checkpoint: expected tensor " + want_name +
                               ", found " + name);
    if (s != shape || elem != sizeof(T))
      throw std::runtime_error("checkpoint: shape/dtype mismatch for " +
                               name);
    std::memcpy(data.data(), raw.data(), raw.size());
  };
  for (auto* p : ps) read_into(p->name, p->value.shape, p->value.data);
  for (auto* b : bs) read_into(b->name, b->value.shape, b->value.data);
}

}  // namespace ccop

#endif  // CCOP_NETWORK_HPP_
