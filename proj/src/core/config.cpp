#include "core/config.hpp"

#include <charconv>
#include <set>

#include "core/util.hpp"

namespace dapt {

std::pair<std::string, std::string> split_dotted_key(const std::string& key) {
  size_t dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
    throw ConfigError("expected a 'section.key' name, got '" + key + "'");
  }
  return {key.substr(0, dot), key.substr(dot + 1)};
}

Settings Settings::parse_string(const std::string& text,
                                const std::string& source_name) {
  Settings s;
  s.source_name_ = source_name;
  std::string section;
  int line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw);
    size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = trim(line.substr(0, comment));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(source_name + ":" + std::to_string(line_no) +
                          ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
    }
    if (section.empty()) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) +
                        ": key before any [section] header");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) +
                        ": empty key");
    }
    auto [it, inserted] = s.file_[section].insert({key, {value, line_no}});
    if (!inserted) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) +
                        ": duplicate key '" + section + "." + key +
                        "' (first at line " + std::to_string(it->second.line) +
                        ")");
    }
  }
  return s;
}

Settings Settings::parse_file(const std::string& path) {
  return parse_string(read_file(path), path);
}

void Settings::adopt_file_layer(const Settings& file) {
  file_ = file.file_;
  source_name_ = file.source_name_;
}

void Settings::set_override(const std::string& dotted_key,
                            const std::string& value) {
  auto [section, key] = split_dotted_key(dotted_key);
  overrides_[section][key] = {value, 0};
}

void Settings::set_default(const std::string& dotted_key,
                           const std::string& value) {
  auto [section, key] = split_dotted_key(dotted_key);
  defaults_[section][key] = {value, 0};
}

const Settings::Entry* Settings::find(const std::string& section,
                                      const std::string& key) const {
  for (const Layer* layer : {&overrides_, &file_, &defaults_}) {
    auto sit = layer->find(section);
    if (sit == layer->end()) continue;
    auto kit = sit->second.find(key);
    if (kit != sit->second.end()) return &kit->second;
  }
  return nullptr;
}

std::string Settings::describe(const std::string& section,
                               const std::string& key,
                               const Entry& entry) const {
  std::string where = section + "." + key;
  if (entry.line > 0) {
    where += " (" + source_name_ + ":" + std::to_string(entry.line) + ")";
  }
  return where;
}

bool Settings::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string Settings::get_string(const std::string& section,
                                 const std::string& key,
                                 const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e != nullptr ? e->value : fallback;
}

std::string Settings::require_string(const std::string& section,
                                     const std::string& key) const {
  const Entry* e = find(section, key);
  if (e == nullptr || e->value.empty()) {
    throw ConfigError("missing required setting '" + section + "." + key +
                      "'");
  }
  return e->value;
}

int64_t Settings::get_int(const std::string& section, const std::string& key,
                          int64_t fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  int64_t value = 0;
  auto [ptr, ec] =
      std::from_chars(e->value.data(), e->value.data() + e->value.size(), value);
  if (ec != std::errc() || ptr != e->value.data() + e->value.size()) {
    throw ConfigError("setting " + describe(section, key, *e) +
                      ": expected an integer, got '" + e->value + "'");
  }
  return value;
}

uint64_t Settings::get_u64(const std::string& section, const std::string& key,
                           uint64_t fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  uint64_t value = 0;
  auto [ptr, ec] =
      std::from_chars(e->value.data(), e->value.data() + e->value.size(), value);
  if (ec != std::errc() || ptr != e->value.data() + e->value.size()) {
    throw ConfigError("setting " + describe(section, key, *e) +
                      ": expected a non-negative integer, got '" + e->value +
                      "'");
  }
  return value;
}

double Settings::get_real(const std::string& section, const std::string& key,
                          double fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  try {
    size_t used = 0;
    double value = std::stod(e->value, &used);
    if (used != e->value.size()) throw std::invalid_argument(e->value);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("setting " + describe(section, key, *e) +
                      ": expected a real number, got '" + e->value + "'");
  }
}

bool Settings::get_bool(const std::string& section, const std::string& key,
                        bool fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  std::string v = to_lower_ascii(e->value);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("setting " + describe(section, key, *e) +
                    ": expected a boolean, got '" + e->value + "'");
}

std::vector<std::string> Settings::get_list(
    const std::string& section, const std::string& key,
    const std::vector<std::string>& fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  std::vector<std::string> out;
  for (const std::string& part : split(e->value, ',')) {
    std::string item = trim(part);
    if (!item.empty()) out.push_back(std::move(item));
  }
  return out;
}

void Settings::require_known(const std::vector<std::string>& known) const {
  std::set<std::string> allowed(known.begin(), known.end());
  for (const Layer* layer : {&overrides_, &file_, &defaults_}) {
    for (const auto& [section, entries] : *layer) {
      for (const auto& [key, entry] : entries) {
        std::string dotted = section + "." + key;
        if (!allowed.count(dotted)) {
          throw ConfigError("unknown setting " +
                            describe(section, key, entry));
        }
      }
    }
  }
}

std::string Settings::serialize() const {
  // Merge with override-wins precedence, then render sorted.
  Layer merged = defaults_;
  for (const Layer* layer : {&file_, &overrides_}) {
    for (const auto& [section, entries] : *layer) {
      for (const auto& [key, entry] : entries) {
        merged[section][key] = entry;
      }
    }
  }
  std::string out;
  for (const auto& [section, entries] : merged) {
    out += "[" + section + "]\n";
    for (const auto& [key, entry] : entries) {
      out += key + "=" + entry.value + "\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace dapt
