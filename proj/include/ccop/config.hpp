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

#ifndef CCOP_CONFIG_HPP_
#define CCOP_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ccop {

/// Flat `section.key = value` configuration. Every key has a documented
/// default; setting a key that has no default is an error, which catches
/// typos in config files and --set overrides.
class Config {
 public:
  /// All keys at their documented defaults.
  static Config defaults();

  /// Parses `text` (lines of `key = value`, `#` comments) over the defaults.
  static Config from_text(const std::string& text);

  static Config from_file(const std::string& path);

  /// Reference file content: every key, its default, and its rationale.
  static std::string reference_text();

  void set(const std::string& key, const std::string& value);

  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int64_t> get_ints(const std::string& key) const;

  /// Canonical sorted `key = value` dump; input order never matters.
  std::string dump() const;

  /// FNV-1a hash of the canonical dump.
  uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ccop

#endif  // CCOP_CONFIG_HPP_
