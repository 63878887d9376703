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

#include "ccop/network.hpp"

#include <cmath>

namespace ccop {

NetworkConfig NetworkConfig::from(const Config& cfg) {
  NetworkConfig n;
  n.backbone = cfg.get_string("network.backbone");
  n.widths.clear();
  for (int64_t w : cfg.get_ints("network.widths"))
    n.widths.push_back(static_cast<int>(w));
  n.fpn_channels = static_cast<int>(cfg.get_int("network.fpn_channels"));
  n.embed_dim = static_cast<int>(cfg.get_int("network.embed_dim"));
  n.mlp_hidden = static_cast<int>(cfg.get_int("network.mlp_hidden"));
  n.roi_size = static_cast<int>(cfg.get_int("network.roi_size"));
  n.bn_momentum = cfg.get_double("network.bn_momentum");
  return n;
}

int assign_level(const Box& b) {
  const double k = 4.0 + std::log2(std::sqrt(b.w * b.h) / 224.0);
  const int level = static_cast<int>(std::floor(k));
  return std::min(5, std::max(2, level));
}

namespace {
constexpr char kMagic[8] = {'C', 'C', 'O', 'P', 'T', 'N', 'S', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error("checkpoint: truncated tensor file");
  return v;
}
}  // namespace

void write_tensor_file_header(std::ostream& os, uint32_t count) {
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, count);
}

uint32_t read_tensor_file_header(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad tensor file magic");
  return read_pod<uint32_t>(is);
}

void write_named_tensor(std::ostream& os, const std::string& name,
                        const std::vector<int>& shape, const void* data,
                        size_t elem_size, int64_t numel) {
  write_pod(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod(os, static_cast<uint8_t>(elem_size));
  write_pod(os, static_cast<uint32_t>(shape.size()));
  for (int d : shape) write_pod(os, static_cast<uint32_t>(d));
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(elem_size * numel));
  if (!os) throw std::runtime_error("checkpoint: tensor write failed");
}

void read_named_tensor(std::istream& is, std::string& name,
                       std::vector<int>& shape, std::vector<char>& raw,
                       size_t& elem_size) {
  const uint32_t name_len = read_pod<uint32_t>(is);
  name.resize(name_len);
  if (!is.read(name.data(), name_len))
    throw std::runtime_error("checkpoint: truncated tensor name");
  elem_size = read_pod<uint8_t>(is);
  const uint32_t ndim = read_pod<uint32_t>(is);
  shape.resize(ndim);
  int64_t numel = ndim == 0 ? 0 : 1;
  for (uint32_t i = 0; i < ndim; ++i) {
    shape[i] = static_cast<int>(read_pod<uint32_t>(is));
    numel *= shape[i];
  }
  raw.resize(static_cast<size_t>(numel) * elem_size);
  if (!is.read(raw.data(), static_cast<std::streamsize>(raw.size())))
    throw std::runtime_error("checkpoint: truncated tensor data for " + name);
}

}  // namespace ccop
