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

#ifndef CCOP_IMAGE_HPP_
#define CCOP_IMAGE_HPP_

#include <array>
#include <string>
#include <vector>

#include "ccop/geometry.hpp"

namespace ccop {

/// HWC interleaved RGB, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // height * width * 3

  Image() = default;
  Image(int w, int h) : width(w), height(h) {
    data.assign(static_cast<size_t>(w) * h * 3, 0.f);
  }

  float& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  bool empty() const { return width == 0 || height == 0; }
};

/// Decodes any raster format OpenCV understands; converts to RGB [0,1].
Image load_image(const std::string& path);

/// Encodes by extension (.png, .jpg, .ppm, ...).
void save_image(const Image& img, const std::string& path);

/// Bilinear resample of `crop` (in source coordinates, may be sub-pixel)
/// to an out_w x out_h image. Sampling is clamped at the source border.
Image crop_resize(const Image& src, const Box& crop, int out_w, int out_h);

Image hflip_image(const Image& src);

/// Separable Gaussian blur with reflected borders.
Image gaussian_blur(const Image& src, double sigma);

/// h, s, v each in [0, 1); h wraps.
std::array<float, 3> rgb_to_hsv(float r, float g, float b);
std::array<float, 3> hsv_to_rgb(float h, float s, float v);

/// Writes a single-channel grid as an 8-bit grayscale image, min-max
/// normalized (used for heatmap exports).
void save_grid_image(const std::vector<float>& grid, int w, int h,
                     const std::string& path);

}  // namespace ccop

#endif  // CCOP_IMAGE_HPP_
