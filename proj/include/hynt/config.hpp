#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hynt/common.hpp"

namespace hynt {

// INI-style config: [section] headers over key = value lines, '#' or ';'
// comments, whitespace-trimmed. Section-less keys land in section "".
class IniFile {
 public:
  static IniFile parse(std::istream& in, const std::string& source_name);
  static IniFile parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  // Deterministic serialization (sections and keys in sorted order).
  void write(std::ostream& out) const;
  void write_file(const std::string& path) const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// Schema-checked reader: every lookup records its key; finish() rejects any
// file key that no lookup ever touched, so misspelled settings fail loudly
// instead of silently using a default.
class IniReader {
 public:
  explicit IniReader(const IniFile& file) : file_(file) {}

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback);
  std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback);
  double get_real(const std::string& section, const std::string& key, double fallback);
  bool get_bool(const std::string& section, const std::string& key, bool fallback);

  // Throws ConfigError listing every key present in the file but never read.
  void finish() const;

 private:
  const IniFile& file_;
  std::set<std::pair<std::string, std::string>> consumed_;
};

}  // namespace hynt
