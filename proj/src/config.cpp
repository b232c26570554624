// SPDX-License-Identifier: Apache-2.0
#include "mvdet/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mvdet {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& text, const std::string& what) {
  const char* p = text.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(p, &end);
  if (end == p || *end != '\0' || errno == ERANGE)
    fail(Errc::bad_argument, what + ": not a number: '" + text + "'");
  return v;
}

}  // namespace

Config Config::parse_text(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string s = trim(line);
    if (s.empty()) continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      fail(Errc::bad_argument,
           origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty())
      fail(Errc::bad_argument, origin + ":" + std::to_string(lineno) + ": empty key");
    for (const auto& it : cfg.items_)
      if (it.first == key)
        fail(Errc::bad_argument,
             origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg.items_.emplace_back(key, value);
  }
  cfg.used_.assign(cfg.items_.size(), 0);
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  return parse_text(read_text_file(path), path);
}

const std::string* Config::find(const std::string& key) const {
  for (size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].first == key) {
      used_[i] = 1;
      return &items_[i].second;
    }
  }
  return nullptr;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

std::string Config::get_string(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) fail(Errc::bad_argument, origin_ + ": missing required key '" + key + "'");
  return *v;
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
  const std::string* v = find(key);
  return v ? *v : def;
}

long long Config::get_int(const std::string& key, long long def) const {
  const std::string* v = find(key);
  if (!v) return def;
  const char* p = v->c_str();
  char* end = nullptr;
  errno = 0;
  long long n = std::strtoll(p, &end, 10);
  if (end == p || *end != '\0' || errno == ERANGE)
    fail(Errc::bad_argument, origin_ + ": key '" + key + "': not an integer: '" + *v + "'");
  return n;
}

double Config::get_double(const std::string& key, double def) const {
  const std::string* v = find(key);
  if (!v) return def;
  return parse_double(*v, origin_ + ": key '" + key + "'");
}

bool Config::get_bool(const std::string& key, bool def) const {
  const std::string* v = find(key);
  if (!v) return def;
  if (*v == "true" || *v == "on" || *v == "1") return true;
  if (*v == "false" || *v == "off" || *v == "0") return false;
  fail(Errc::bad_argument, origin_ + ": key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& def) const {
  const std::string* v = find(key);
  if (!v) return def;
  std::vector<double> out;
  std::string item;
  std::istringstream in(*v);
  while (std::getline(in, item, ',')) {
    std::string s = trim(item);
    if (s.empty())
      fail(Errc::bad_argument, origin_ + ": key '" + key + "': empty list element");
    out.push_back(parse_double(s, origin_ + ": key '" + key + "'"));
  }
  if (out.empty()) fail(Errc::bad_argument, origin_ + ": key '" + key + "': empty list");
  return out;
}

void Config::check_all_consumed() const {
  std::string bad;
  for (size_t i = 0; i < items_.size(); ++i) {
    if (!used_[i]) {
      if (!bad.empty()) bad += ", ";
      bad += "'" + items_[i].first + "'";
    }
  }
  if (!bad.empty()) fail(Errc::bad_argument, origin_ + ": unknown key(s): " + bad);
}

std::string render_config(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& it : kv) {
    out += it.first;
    out += " = ";
    out += it.second;
    out += '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(Errc::io_failure, "read failed: " + path);
  return ss.str();
}

std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace mvdet
