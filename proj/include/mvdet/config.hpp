// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mvdet/error.hpp"

namespace mvdet {

// Flat `key = value` run configuration. `#` starts a comment, blank lines are
// skipped, duplicate keys are rejected. Consumers pull typed values; any key
// never consumed is an error (typo guard), checked via check_all_consumed().
class Config {
 public:
  Config() = default;

  static Config parse_text(const std::string& text, const std::string& origin = "<string>");
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;

  // Typed getters. The two-argument forms fall back to the default when the
  // key is absent; the one-argument forms require it.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  long long get_int(const std::string& key, long long def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  // Comma-separated list of numbers.
  std::vector<double> get_list(const std::string& key, const std::vector<double>& def) const;

  // Every key must have been consumed by a getter; otherwise the leftovers are
  // reported as unknown keys.
  void check_all_consumed() const;

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  const std::string* find(const std::string& key) const;

  std::string origin_ = "<empty>";
  std::vector<std::pair<std::string, std::string>> items_;
  mutable std::vector<char> used_;
};

// Echo helpers: the effective configuration written into output directories.
std::string render_config(const std::vector<std::pair<std::string, std::string>>& kv);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

std::string format_double(double v);  // shortest round-trip text (%.17g trimmed)

}  // namespace mvdet
