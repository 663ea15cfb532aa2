#pragma once

// Plain-text configuration files.
//
//   file     := { line }
//   line     := blank | comment | section | entry
//   comment  := ('#' | ';') any*
//   section  := '[' name ']'           (a name may repeat, e.g. [sphere])
//   entry    := key '=' value          (value runs to end of line; a trailing
//                                       '#' comment is stripped)
//
// Entries before the first section header belong to the unnamed section "".
// Vectors are written as comma- or space-separated numbers: "0.1, 0.2, 0.3".

#include "msnerf/geometry.hpp"

#include <istream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace msnerf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigSection {
 public:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };

  ConfigSection(std::string source, std::string name, int line)
      : source_(std::move(source)), name_(std::move(name)), line_(line) {}

  const std::string& name() const { return name_; }
  int line() const { return line_; }
  const std::vector<Entry>& entries() const { return entries_; }
  void add(Entry e);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  // Throws ConfigError naming the first key no getter has asked for.
  void reject_unknown() const;

 private:
  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const Entry& e, const std::string& what) const;

  std::string source_;
  std::string name_;
  int line_ = 0;
  std::vector<Entry> entries_;
  mutable std::set<std::string> used_;
};

class Config {
 public:
  static Config parse(std::istream& in, const std::string& source);
  static Config parse_string(const std::string& text, const std::string& source = "<string>");
  static Config load(const std::string& path);

  // The first section of that name; an empty section if absent.
  const ConfigSection& section(const std::string& name) const;
  std::vector<const ConfigSection*> sections(const std::string& name) const;
  const std::vector<ConfigSection>& all() const { return sections_; }

  // Throws for section names outside `known`.
  void reject_unknown_sections(const std::set<std::string>& known) const;

 private:
  std::string source_;
  std::vector<ConfigSection> sections_;
  ConfigSection empty_{"", "", 0};
};

}  // namespace msnerf
