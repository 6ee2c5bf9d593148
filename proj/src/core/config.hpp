#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dapt {

// Flat sectioned key=value configuration with three precedence layers:
// command-line overrides beat the config file, which beats programmatic
// defaults (e.g. an environment-derived output directory). Keys are
// addressed as "section.key". Unknown keys are rejected against a schema so
// typos fail loudly, with the file line number when there is one.
class Settings {
 public:
  Settings() = default;

  // Parses "[section]" headers and "key=value" lines; '#' and ';' start
  // comments; blank lines are ignored. Throws ConfigError with the line
  // number on malformed lines, duplicate keys, or keys before any section.
  static Settings parse_file(const std::string& path);
  static Settings parse_string(const std::string& text,
                               const std::string& source_name);

  // Merges `file` content into this Settings' file layer (used to layer a
  // parsed file under already-applied overrides).
  void adopt_file_layer(const Settings& file);

  void set_override(const std::string& dotted_key, const std::string& value);
  void set_default(const std::string& dotted_key, const std::string& value);

  bool has(const std::string& section, const std::string& key) const;

  // Typed getters; `fallback` applies when no layer has the key. Parse
  // failures throw ConfigError naming section.key (and line if from a file).
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  int64_t get_int(const std::string& section, const std::string& key,
                  int64_t fallback) const;
  uint64_t get_u64(const std::string& section, const std::string& key,
                   uint64_t fallback) const;
  double get_real(const std::string& section, const std::string& key,
                  double fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  // Comma-separated list; an absent key gives `fallback`, while an
  // explicitly empty value gives an empty list (an override can clear a
  // list the file set).
  std::vector<std::string> get_list(const std::string& section,
                                    const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  // Requires a key to be present in some layer.
  std::string require_string(const std::string& section,
                             const std::string& key) const;

  // Throws ConfigError for any present key not in `known`
  // (entries are dotted "section.key" names).
  void require_known(const std::vector<std::string>& known) const;

  // Deterministic "effective config" rendering: sections and keys sorted,
  // one "key=value" per line. Parses back to an equivalent Settings.
  std::string serialize() const;

  const std::string& source_name() const { return source_name_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;  // 0 = not from a file
  };
  // section -> key -> entry
  using Layer = std::map<std::string, std::map<std::string, Entry>>;

  const Entry* find(const std::string& section, const std::string& key) const;
  std::string describe(const std::string& section, const std::string& key,
                       const Entry& entry) const;

  Layer defaults_;
  Layer file_;
  Layer overrides_;
  std::string source_name_;
};

// Splits "section.key" at the first dot; throws ConfigError otherwise.
std::pair<std::string, std::string> split_dotted_key(const std::string& key);

}  // namespace dapt
