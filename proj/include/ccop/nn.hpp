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

#ifndef CCOP_NN_HPP_
#define CCOP_NN_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccop/rng.hpp"
#include "ccop/tensor.hpp"

// Minimal layer zoo with explicit forward/backward. Layers cache what their
// backward needs when forward is called with keep=true; the contract is one
// in-flight backward per layer (the trainer runs steps sequentially, and the
// key branch always forwards with keep=false).

namespace ccop {

template <typename T>
using MatRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = true;  // weight decay skips biases and norm parameters

  Param(std::string n, std::vector<int> shape, bool d)
      : name(std::move(n)), value(std::move(shape)), decay(d) {
    grad = Tensor<T>(value.shape);
  }
};

/// Non-trainable state that still belongs in checkpoints (BN running stats).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T> value;
  Buffer(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(std::move(shape)) {}
};

enum class BnMode { kTrain, kEval };

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, int cin, int cout, int k, int stride, int pad,
         bool bias)
      : w_(name + ".w", {cout, cin, k, k}, true),
        cin_(cin),
        cout_(cout),
        k_(k),
        stride_(stride),
        pad_(pad) {
    if (bias) b_ = std::make_unique<Param<T>>(name + ".b",
                                              std::vector<int>{cout}, false);
  }

  void init(Rng& rng) {
    const double std = std::sqrt(2.0 / (cin_ * k_ * k_));
    for (T& v : w_.value.data) v = static_cast<T>(rng.normal() * std);
    if (b_) b_->value.zero();
  }

  int out_dim(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x, bool keep) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = out_dim(h), ow = out_dim(w);
    Tensor<T> col = im2col(x, oh, ow);
    Tensor<T> y({n, cout_, oh, ow});
    const int64_t cols = static_cast<int64_t>(n) * oh * ow;
    CMapM<T> wm(w_.value.data.data(), cout_, cin_ * k_ * k_);
    CMapM<T> cm(col.data.data(), cin_ * k_ * k_, cols);
    MatRM<T> ym = wm * cm;  // [cout, n*oh*ow]
    const int64_t plane = static_cast<int64_t>(oh) * ow;
    for (int b = 0; b < n; ++b)
      for (int co = 0; co < cout_; ++co) {
        const T* src = ym.data() + co * cols + b * plane;
        T* dst = y.data.data() + (b * cout_ + co) * plane;
        std::copy(src, src + plane, dst);
      }
    if (b_)
      for (int b = 0; b < n; ++b)
        for (int co = 0; co < cout_; ++co) {
          T* dst = y.data.data() + (b * cout_ + co) * plane;
          const T bias = b_->value.data[co];
          for (int64_t i = 0; i < plane; ++i) dst[i] += bias;
        }
    if (keep) input_ = x;
    return y;
  }

  /// Accumulates into parameter grads; returns dL/dx.
  Tensor<T> backward(const Tensor<T>& dy) {
    const Tensor<T>& x = input_;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = dy.dim(2), ow = dy.dim(3);
    const int64_t cols = static_cast<int64_t>(n) * oh * ow;
    const int64_t plane = static_cast<int64_t>(oh) * ow;

    MatRM<T> dym(cout_, cols);
    for (int b = 0; b < n; ++b)
      for (int co = 0; co < cout_; ++co) {
        const T* src = dy.data.data() + (b * cout_ + co) * plane;
        std::copy(src, src + plane, dym.data() + co * cols + b * plane);
      }

    Tensor<T> col = im2col(x, oh, ow);
    CMapM<T> cm(col.data.data(), cin_ * k_ * k_, cols);
    MapM<T> dwm(w_.grad.data.data(), cout_, cin_ * k_ * k_);
    dwm.noalias() += dym * cm.transpose();
    if (b_)
      for (int co = 0; co < cout_; ++co)
        b_->grad.data[co] += dym.row(co).sum();

    CMapM<T> wm(w_.value.data.data(), cout_, cin_ * k_ * k_);
    MatRM<T> dcol = wm.transpose() * dym;  // [K, cols]
    return col2im(dcol, n, h, w, oh, ow);
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&w_);
    if (b_) ps.push_back(b_.get());
  }

  int out_channels() const { return cout_; }

 private:
  Tensor<T> im2col(const Tensor<T>& x, int oh, int ow) const {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t cols = static_cast<int64_t>(n) * oh * ow;
    Tensor<T> col({cin_ * k_ * k_, static_cast<int>(cols)});
    for (int ci = 0; ci < cin_; ++ci)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* row =
              col.data.data() + ((ci * k_ + ky) * k_ + kx) * cols;
          for (int b = 0; b < n; ++b) {
            const T* src = x.data.data() + (b * cin_ + ci) * h * w;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              T* dst = row + (static_cast<int64_t>(b) * oh + oy) * ow;
              if (iy < 0 || iy >= h) {
                std::fill(dst, dst + ow, T(0));
                continue;
              }
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                dst[ox] = (ix < 0 || ix >= w) ? T(0) : src[iy * w + ix];
              }
            }
          }
        }
    return col;
  }

  Tensor<T> col2im(const MatRM<T>& dcol, int n, int h, int w, int oh,
                   int ow) const {
    Tensor<T> dx({n, cin_, h, w});
    const int64_t cols = static_cast<int64_t>(n) * oh * ow;
    for (int ci = 0; ci < cin_; ++ci)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* row =
              dcol.data() + ((ci * k_ + ky) * k_ + kx) * cols;
          for (int b = 0; b < n; ++b) {
            T* dst = dx.data.data() + (b * cin_ + ci) * h * w;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= h) continue;
              const T* src = row + (static_cast<int64_t>(b) * oh + oy) * ow;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix >= 0 && ix < w) dst[iy * w + ix] += src[ox];
              }
            }
          }
        }
    return dx;
  }

  Param<T> w_;
  std::unique_ptr<Param<T>> b_;
  Tensor<T> input_;
  int cin_, cout_, k_, stride_, pad_;
};

// ---------------------------------------------------------------------------

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, int c, double momentum = 0.1,
              double eps = 1e-5)
      : gamma_(name + ".gamma", {c}, false),
        beta_(name + ".beta", {c}, false),
        running_mean_(name + ".running_mean", {c}),
        running_var_(name + ".running_var", {c}),
        c_(c),
        momentum_(momentum),
        eps_(eps) {
    for (T& v : gamma_.value.data) v = T(1);
    for (T& v : running_var_.value.data) v = T(1);
  }

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, bool keep) {
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t m = static_cast<int64_t>(n) * h * w;
    Tensor<T> y(x.shape);
    if (keep) {
      mean_.assign(c_, T(0));
      invstd_.assign(c_, T(0));
      xhat_ = Tensor<T>(x.shape);
    }
    for (int c = 0; c < c_; ++c) {
      T mu, var;
      if (mode == BnMode::kTrain) {
        double s = 0.0;
        for (int b = 0; b < n; ++b) {
          const T* p = x.data.data() + (b * c_ + c) * h * w;
          for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) s += p[i];
        }
        mu = static_cast<T>(s / m);
        double v = 0.0;
        for (int b = 0; b < n; ++b) {
          const T* p = x.data.data() + (b * c_ + c) * h * w;
          for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
            const double d = p[i] - mu;
            v += d * d;
          }
        }
        var = static_cast<T>(v / m);  // biased, used for normalization
        // Running stats keep the unbiased variance.
        const double unbiased = m > 1 ? v / (m - 1) : v;
        running_mean_.value.data[c] = static_cast<T>(
            (1.0 - momentum_) * running_mean_.value.data[c] + momentum_ * mu);
        running_var_.value.data[c] =
            static_cast<T>((1.0 - momentum_) * running_var_.value.data[c] +
                           momentum_ * unbiased);
      } else {
        mu = running_mean_.value.data[c];
        var = running_var_.value.data[c];
      }
      const T istd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) +
                                                    eps_));
      const T g = gamma_.value.data[c], be = beta_.value.data[c];
      for (int b = 0; b < n; ++b) {
        const T* p = x.data.data() + (b * c_ + c) * h * w;
        T* q = y.data.data() + (b * c_ + c) * h * w;
        T* xh = keep ? xhat_.data.data() + (b * c_ + c) * h * w : nullptr;
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
          const T v = (p[i] - mu) * istd;
          if (xh) xh[i] = v;
          q[i] = g * v + be;
        }
      }
      if (keep) {
        mean_[c] = mu;
        invstd_[c] = istd;
        cached_mode_ = mode;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const int64_t m = static_cast<int64_t>(n) * h * w;
    Tensor<T> dx(dy.shape);
    for (int c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* pdy = dy.data.data() + (b * c_ + c) * h * w;
        const T* pxh = xhat_.data.data() + (b * c_ + c) * h * w;
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
          sum_dy += pdy[i];
          sum_dy_xhat += pdy[i] * pxh[i];
        }
      }
      gamma_.grad.data[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad.data[c] += static_cast<T>(sum_dy);
      const T g = gamma_.value.data[c];
      const T istd = invstd_[c];
      for (int b = 0; b < n; ++b) {
        const T* pdy = dy.data.data() + (b * c_ + c) * h * w;
        const T* pxh = xhat_.data.data() + (b * c_ + c) * h * w;
        T* pdx = dx.data.data() + (b * c_ + c) * h * w;
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
          if (cached_mode_ == BnMode::kTrain) {
            // Batch statistics depend on x, hence the centering terms.
            pdx[i] = static_cast<T>(
                g * istd *
                (pdy[i] - sum_dy / m - pxh[i] * (sum_dy_xhat / m)));
          } else {
            pdx[i] = static_cast<T>(g * istd * pdy[i]);
          }
        }
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&gamma_);
    ps.push_back(&beta_);
  }
  void collect_buffers(std::vector<Buffer<T>*>& bs) {
    bs.push_back(&running_mean_);
    bs.push_back(&running_var_);
  }

 private:
  Param<T> gamma_, beta_;
  Buffer<T> running_mean_, running_var_;
  std::vector<T> mean_, invstd_;
  Tensor<T> xhat_;
  BnMode cached_mode_ = BnMode::kTrain;
  int c_;
  double momentum_, eps_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool keep) {
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
      y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    if (keep) out_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(dy.shape);
    for (size_t i = 0; i < dy.data.size(); ++i)
      dx.data[i] = out_.data[i] > T(0) ? dy.data[i] : T(0);
    return dx;
  }

 private:
  Tensor<T> out_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Linear {
 public:
  Linear(std::string name, int in, int out)
      : w_(name + ".w", {out, in}, true),
        b_(name + ".b", {out}, false),
        in_(in),
        out_(out) {}

  void init(Rng& rng) {
    const double std = std::sqrt(2.0 / in_);
    for (T& v : w_.value.data) v = static_cast<T>(rng.normal() * std);
    b_.value.zero();
  }

  /// x: [n, in] -> [n, out]
  Tensor<T> forward(const Tensor<T>& x, bool keep) {
    const int n = x.dim(0);
    Tensor<T> y({n, out_});
    CMapM<T> xm(x.data.data(), n, in_);
    CMapM<T> wm(w_.value.data.data(), out_, in_);
    MapM<T> ym(y.data.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) y.at(i, o) += b_.value.data[o];
    if (keep) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = dy.dim(0);
    CMapM<T> dym(dy.data.data(), n, out_);
    CMapM<T> xm(input_.data.data(), n, in_);
    MapM<T> dwm(w_.grad.data.data(), out_, in_);
    dwm.noalias() += dym.transpose() * xm;
    for (int o = 0; o < out_; ++o) b_.grad.data[o] += dym.col(o).sum();
    Tensor<T> dx({n, in_});
    CMapM<T> wm(w_.value.data.data(), out_, in_);
    MapM<T> dxm(dx.data.data(), n, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&w_);
    ps.push_back(&b_);
  }

 private:
  Param<T> w_, b_;
  Tensor<T> input_;
  int in_, out_;
};

// ---------------------------------------------------------------------------

template <typename T>
class MaxPool2d {
 public:
  MaxPool2d(int k, int stride, int pad) : k_(k), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, bool keep) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = (h + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (w + 2 * pad_ - k_) / stride_ + 1;
    Tensor<T> y({n, c, oh, ow});
    if (keep) {
      argmax_.assign(y.numel(), -1);
      in_shape_ = x.shape;
    }
    int64_t oi = 0;
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const T* src = x.data.data() + (b * c + ch) * h * w;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox, ++oi) {
            T best = std::numeric_limits<T>::lowest();
            int64_t best_i = -1;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= w) continue;
                if (src[iy * w + ix] > best) {
                  best = src[iy * w + ix];
                  best_i = (b * c + ch) * static_cast<int64_t>(h) * w +
                           iy * w + ix;
                }
              }
            }
            y.data[oi] = best;
            if (keep) argmax_[oi] = best_i;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_shape_);
    for (size_t i = 0; i < dy.data.size(); ++i)
      if (argmax_[i] >= 0) dx.data[argmax_[i]] += dy.data[i];
    return dx;
  }

 private:
  int k_, stride_, pad_;
  std::vector<int64_t> argmax_;
  std::vector<int> in_shape_;
};

// ---------------------------------------------------------------------------
// Free-function ops.

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({n, c, h * 2, w * 2});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.data.data() + (b * c + ch) * h * w;
      T* dst = y.data.data() + (b * c + ch) * h * w * 4;
      for (int yy = 0; yy < 2 * h; ++yy)
        for (int xx = 0; xx < 2 * w; ++xx)
          dst[yy * 2 * w + xx] = src[(yy / 2) * w + (xx / 2)];
    }
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& dy) {
  const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2) / 2,
            w = dy.dim(3) / 2;
  Tensor<T> dx({n, c, h, w});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = dy.data.data() + (b * c + ch) * h * w * 4;
      T* dst = dx.data.data() + (b * c + ch) * h * w;
      for (int yy = 0; yy < 2 * h; ++yy)
        for (int xx = 0; xx < 2 * w; ++xx)
          dst[(yy / 2) * w + (xx / 2)] += src[yy * 2 * w + xx];
    }
  return dx;
}

/// [n, c, h, w] -> [n, c]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({n, c});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      const T* p = x.data.data() + (b * c + ch) * h * w;
      for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) s += p[i];
      y.at(b, ch) = static_cast<T>(s / (static_cast<int64_t>(h) * w));
    }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, int h, int w) {
  const int n = dy.dim(0), c = dy.dim(1);
  Tensor<T> dx({n, c, h, w});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T g = dy.at(b, ch) / static_cast<T>(h * w);
      T* p = dx.data.data() + (b * c + ch) * h * w;
      for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) p[i] = g;
    }
  return dx;
}

/// Row-wise L2 normalization of [n, d]; keeps inputs for backward.
template <typename T>
struct L2Normalize {
  Tensor<T> forward(const Tensor<T>& x, bool keep) {
    const int n = x.dim(0), d = x.dim(1);
    Tensor<T> y(x.shape);
    if (keep) norms_.assign(n, T(0));
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += double(x.at(i, j)) * x.at(i, j);
      const T nrm = static_cast<T>(std::sqrt(s) + 1e-12);
      for (int j = 0; j < d; ++j) y.at(i, j) = x.at(i, j) / nrm;
      if (keep) norms_[i] = nrm;
    }
    if (keep) out_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) const {
    const int n = dy.dim(0), d = dy.dim(1);
    Tensor<T> dx(dy.shape);
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += double(dy.at(i, j)) * out_.at(i, j);
      for (int j = 0; j < d; ++j)
        dx.at(i, j) = static_cast<T>(
            (dy.at(i, j) - static_cast<T>(dot) * out_.at(i, j)) / norms_[i]);
    }
    return dx;
  }

  std::vector<T> norms_;
  Tensor<T> out_;
};

// ---------------------------------------------------------------------------

/// conv -> bn -> relu with a single backward entry point.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu(std::string name, int cin, int cout, int k, int stride, int pad,
             double bn_momentum)
      : conv_(name + ".conv", cin, cout, k, stride, pad, /*bias=*/false),
        bn_(name + ".bn", cout, bn_momentum) {}

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, bool keep) {
    return relu_.forward(bn_.forward(conv_.forward(x, keep), mode, keep),
                         keep);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    return conv_.backward(bn_.backward(relu_.backward(dy)));
  }

  void init(Rng& rng) { conv_.init(rng); }
  void collect(std::vector<Param<T>*>& ps) {
    conv_.collect(ps);
    bn_.collect(ps);
  }
  void collect_buffers(std::vector<Buffer<T>*>& bs) {
    bn_.collect_buffers(bs);
  }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  Relu<T> relu_;
};

}  // namespace ccop

#endif  // CCOP_NN_HPP_
