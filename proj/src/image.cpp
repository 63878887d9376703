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

#include "ccop/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace ccop {

Image load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("cannot read image: " + path);
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.f;  // BGR -> RGB
      img.at(y, x, 1) = row[x][1] / 255.f;
      img.at(y, x, 2) = row[x][0] / 255.f;
    }
  }
  return img;
}

void save_image(const Image& img, const std::string& path) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      auto q = [&](int c) {
        return static_cast<uchar>(
            std::clamp(img.at(y, x, c) * 255.f + 0.5f, 0.f, 255.f));
      };
      row[x] = cv::Vec3b(q(2), q(1), q(0));
    }
  }
  if (!cv::imwrite(path, m))
    throw std::runtime_error("cannot write image: " + path);
}

namespace {
inline float sample_clamped(const Image& src, double sy, double sx, int c) {
  double iy = sy - 0.5, ix = sx - 0.5;
  iy = std::clamp(iy, 0.0, static_cast<double>(src.height - 1));
  ix = std::clamp(ix, 0.0, static_cast<double>(src.width - 1));
  const int y0 = static_cast<int>(iy), x0 = static_cast<int>(ix);
  const int y1 = std::min(y0 + 1, src.height - 1);
  const int x1 = std::min(x0 + 1, src.width - 1);
  const float fy = static_cast<float>(iy - y0), fx = static_cast<float>(ix - x0);
  const float a = src.at(y0, x0, c) * (1 - fx) + src.at(y0, x1, c) * fx;
  const float b = src.at(y1, x0, c) * (1 - fx) + src.at(y1, x1, c) * fx;
  return a * (1 - fy) + b * fy;
}
}  // namespace

Image crop_resize(const Image& src, const Box& crop, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1 || crop.w <= 0 || crop.h <= 0)
    throw std::invalid_argument("crop_resize: degenerate crop or output");
  Image out(out_w, out_h);
  const double sx = crop.w / out_w, sy = crop.h / out_h;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const double cy = crop.y + (y + 0.5) * sy;
      const double cx = crop.x + (x + 0.5) * sx;
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = sample_clamped(src, cy, cx, c);
    }
  return out;
}

Image hflip_image(const Image& src) {
  Image out(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = src.at(y, src.width - 1 - x, c);
  return out;
}

Image gaussian_blur(const Image& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] =
        static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    sum += kernel[i + radius];
  }
  for (float& k : kernel) k = static_cast<float>(k / sum);

  auto reflect = [](int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return std::clamp(i, 0, n - 1);
  };

  Image tmp(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float acc = 0.f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * src.at(y, reflect(x + i, src.width), c);
        tmp.at(y, x, c) = acc;
      }
  Image out(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float acc = 0.f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(reflect(y + i, src.height), x, c);
        out.at(y, x, c) = acc;
      }
  return out;
}

std::array<float, 3> rgb_to_hsv(float r, float g, float b) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  float h = 0.f;
  if (d > 0.f) {
    if (mx == r)
      h = std::fmod((g - b) / d, 6.f);
    else if (mx == g)
      h = (b - r) / d + 2.f;
    else
      h = (r - g) / d + 4.f;
    h /= 6.f;
    if (h < 0.f) h += 1.f;
  }
  const float s = mx > 0.f ? d / mx : 0.f;
  return {h, s, mx};
}

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
  h = h - std::floor(h);
  const float c = v * s;
  const float hp = h * 6.f;
  const float x = c * (1.f - std::fabs(std::fmod(hp, 2.f) - 1.f));
  float r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  const float m = v - c;
  return {r + m, g + m, b + m};
}

void save_grid_image(const std::vector<float>& grid, int w, int h,
                     const std::string& path) {
  float lo = grid.empty() ? 0.f : grid[0], hi = lo;
  for (float v : grid) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float scale = hi > lo ? 1.f / (hi - lo) : 0.f;
  cv::Mat m(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m.at<uchar>(y, x) = static_cast<uchar>(
          std::clamp((grid[y * w + x] - lo) * scale * 255.f + 0.5f, 0.f,
                     255.f));
  if (!cv::imwrite(path, m))
    throw std::runtime_error("cannot write image: " + path);
}

}  // namespace ccop
