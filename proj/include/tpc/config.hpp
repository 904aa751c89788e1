#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tpc {

struct ConfigValue {
  enum class Kind { Int, Float, Bool, String };
  Kind kind = Kind::Int;
  int64_t i = 0;
  double d = 0.0;
  bool b = false;
  std::string s;

  static ConfigValue parse_literal(const std::string& raw);
  std::string to_toml() const;
  bool operator==(const ConfigValue&) const = default;
};

// Flat dotted-path -> scalar view of a TOML document ([section] headers plus
// key = value lines; strings, booleans, integers, floats). serialize() is
// canonical, so parse(serialize(c)) == c byte-for-byte snapshots configs.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load_file(const std::string& path);

  bool has(const std::string& path) const { return values_.count(path) != 0; }
  int64_t get_int(const std::string& path, int64_t def) const;
  double get_double(const std::string& path, double def) const;
  bool get_bool(const std::string& path, bool def) const;
  std::string get_string(const std::string& path, const std::string& def) const;

  void set(const std::string& path, ConfigValue v) { values_[path] = std::move(v); }
  // "key.path=literal" as accepted on the command line
  void apply_override(const std::string& assignment);

  std::vector<std::string> paths() const;
  std::string serialize() const;
  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, ConfigValue> values_;
};

}  // namespace tpc
