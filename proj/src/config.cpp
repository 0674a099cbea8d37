#include "charparse/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace charparse {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    cfg.add(key, std::string(value));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << to_string();
}

bool Config::has(std::string_view key) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == key; });
}

std::string Config::get(std::string_view key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == key) return it->second;
  }
  throw ConfigError("missing config key: " + std::string(key));
}

std::vector<std::string> Config::get_all(std::string_view key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

void Config::set(std::string_view key, std::string value) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const auto& e) { return e.first == key; });
  if (it == entries_.end()) {
    entries_.emplace_back(std::string(key), std::move(value));
    return;
  }
  it->second = std::move(value);
  const auto first = it - entries_.begin();
  entries_.erase(std::remove_if(entries_.begin() + first + 1, entries_.end(),
                                [&](const auto& e) { return e.first == key; }),
                 entries_.end());
}

void Config::add(std::string_view key, std::string value) {
  entries_.emplace_back(std::string(key), std::move(value));
}

void Config::erase(std::string_view key) {
  entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                [&](const auto& e) { return e.first == key; }),
                 entries_.end());
}

void Config::merge(const Config& overrides) {
  std::vector<std::string> seen;
  for (const auto& [k, v] : overrides.entries_) {
    if (std::find(seen.begin(), seen.end(), k) == seen.end()) {
      seen.push_back(k);
      erase(k);
    }
    add(k, v);
  }
}

std::string Config::resolve(std::string_view key, std::string_view fallback) {
  if (has(key)) return get(key);
  add(key, std::string(fallback));
  return std::string(fallback);
}

double Config::resolve_double(std::string_view key, double fallback) {
  if (has(key)) return parse_double(get(key), key);
  add(key, format_double(fallback));
  return fallback;
}

long long Config::resolve_int(std::string_view key, long long fallback) {
  if (has(key)) return parse_int(get(key), key);
  add(key, std::to_string(fallback));
  return fallback;
}

bool Config::resolve_bool(std::string_view key, bool fallback) {
  if (has(key)) return parse_bool(get(key), key);
  add(key, fallback ? "true" : "false");
  return fallback;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("invalid number for '" + std::string(what) + "': " + std::string(text));
  }
  return v;
}

long long parse_int(std::string_view text, std::string_view what) {
  long long v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("invalid integer for '" + std::string(what) + "': " + std::string(text));
  }
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid boolean for '" + std::string(what) + "': " + std::string(text));
}

}  // namespace charparse
