#include "hynt/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hynt {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

IniFile IniFile::parse(std::istream& in, const std::string& source_name) {
  IniFile file;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      file.sections_[section];  // empty sections are legal
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    auto [it, inserted] = file.sections_[section].emplace(key, value);
    if (!inserted) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return file;
}

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse(in, path);
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  auto sit = sections_.find(section);
  return sit != sections_.end() && sit->second.count(key) > 0;
}

const std::string& IniFile::get(const std::string& section, const std::string& key) const {
  auto sit = sections_.find(section);
  if (sit == sections_.end() || sit->second.count(key) == 0) {
    throw ConfigError("missing config key [" + section + "] " + key);
  }
  return sit->second.at(key);
}

void IniFile::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

void IniFile::write(std::ostream& out) const {
  bool first = true;
  for (const auto& [section, keys] : sections_) {
    if (!first) out << "\n";
    first = false;
    if (!section.empty()) out << "[" << section << "]\n";
    for (const auto& [key, value] : keys) out << key << " = " << value << "\n";
  }
}

void IniFile::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write config file: " + path);
  write(out);
}

std::string IniReader::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) {
  consumed_.insert({section, key});
  return file_.has(section, key) ? file_.get(section, key) : fallback;
}

std::int64_t IniReader::get_int(const std::string& section, const std::string& key,
                                std::int64_t fallback) {
  consumed_.insert({section, key});
  if (!file_.has(section, key)) return fallback;
  const std::string& raw = file_.get(section, key);
  char* end = nullptr;
  std::int64_t v = std::strtoll(raw.c_str(), &end, 10);
  if (end != raw.c_str() + raw.size() || raw.empty()) {
    throw ConfigError("config key [" + section + "] " + key + ": not an integer: '" + raw + "'");
  }
  return v;
}

double IniReader::get_real(const std::string& section, const std::string& key, double fallback) {
  consumed_.insert({section, key});
  if (!file_.has(section, key)) return fallback;
  const std::string& raw = file_.get(section, key);
  char* end = nullptr;
  double v = std::strtod(raw.c_str(), &end);
  if (end != raw.c_str() + raw.size() || raw.empty()) {
    throw ConfigError("config key [" + section + "] " + key + ": not a number: '" + raw + "'");
  }
  return v;
}

bool IniReader::get_bool(const std::string& section, const std::string& key, bool fallback) {
  consumed_.insert({section, key});
  if (!file_.has(section, key)) return fallback;
  const std::string& raw = file_.get(section, key);
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
  throw ConfigError("config key [" + section + "] " + key + ": not a boolean: '" + raw + "'");
}

void IniReader::finish() const {
  std::vector<std::string> unknown;
  for (const auto& [section, keys] : file_.sections()) {
    for (const auto& [key, value] : keys) {
      if (consumed_.count({section, key}) == 0) {
        unknown.push_back("[" + section + "] " + key);
      }
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config key(s):";
    for (const std::string& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
}

}  // namespace hynt
