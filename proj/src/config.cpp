#include "msnerf/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace msnerf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
  std::istringstream in(text);
  in >> out;
  if (!in) return false;
  in >> std::ws;
  return in.eof();
}

}  // namespace

void ConfigSection::add(Entry e) { entries_.push_back(std::move(e)); }

const ConfigSection::Entry* ConfigSection::find(const std::string& key) const {
  used_.insert(key);
  // Later entries override earlier ones.
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->key == key) return &*it;
  }
  return nullptr;
}

void ConfigSection::fail(const Entry& e, const std::string& what) const {
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": " + what + " for '" + e.key +
                    "' (got '" + e.value + "')");
}

bool ConfigSection::has(const std::string& key) const { return find(key) != nullptr; }

std::string ConfigSection::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double ConfigSection::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  double v = 0.0;
  if (!parse_number(e->value, v)) fail(*e, "expected a number");
  return v;
}

int ConfigSection::get_int(const std::string& key, int fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  double v = 0.0;
  if (!parse_number(e->value, v) || v != std::floor(v) || std::abs(v) > 2e9) {
    fail(*e, "expected an integer");
  }
  return static_cast<int>(v);
}

bool ConfigSection::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  fail(*e, "expected a boolean");
}

std::vector<double> ConfigSection::get_doubles(const std::string& key,
                                               const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::string text = e->value;
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    if (!parse_number(tok, v)) fail(*e, "expected a list of numbers");
    out.push_back(v);
  }
  return out;
}

Vec3 ConfigSection::get_vec3(const std::string& key, const Vec3& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const auto v = get_doubles(key, {});
  if (v.size() != 3) fail(*e, "expected three numbers");
  return {v[0], v[1], v[2]};
}

void ConfigSection::reject_unknown() const {
  for (const auto& e : entries_) {
    if (!used_.count(e.key)) {
      throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + e.key +
                        "' in section [" + name_ + "]");
    }
  }
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  cfg.sections_.emplace_back(source, "", 0);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line[0] == '[') {
      if (line.back() != ']') {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": unterminated section header");
      }
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": empty section name");
      }
      cfg.sections_.emplace_back(source, name, lineno);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = line.substr(eq + 1);
    const auto hash = value.find('#');
    if (hash != std::string::npos) value.resize(hash);
    value = trim(value);
    if (key.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": missing key before '='");
    }
    cfg.sections_.back().add({std::move(key), std::move(value), lineno});
  }
  return cfg;
}

Config Config::parse_string(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse(in, source);
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, path);
}

const ConfigSection& Config::section(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name() == name) return s;
  }
  return empty_;
}

std::vector<const ConfigSection*> Config::sections(const std::string& name) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections_) {
    if (s.name() == name) out.push_back(&s);
  }
  return out;
}

void Config::reject_unknown_sections(const std::set<std::string>& known) const {
  for (const auto& s : sections_) {
    if (s.name().empty()) continue;
    if (!known.count(s.name())) {
      throw ConfigError(source_ + ":" + std::to_string(s.line()) + ": unknown section [" +
                        s.name() + "]");
    }
  }
}

}  // namespace msnerf
