#include "tpc/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tpc {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// strips a trailing comment that is not inside a quoted string
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

bool looks_like_int(const std::string& s) {
  size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i >= s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace

ConfigValue ConfigValue::parse_literal(const std::string& raw_in) {
  std::string raw = trim(raw_in);
  if (raw.empty()) throw std::runtime_error("config: empty value");
  ConfigValue v;
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') {
      throw std::runtime_error("config: unterminated string " + raw);
    }
    v.kind = Kind::String;
    std::string out;
    for (size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) {
        ++i;
        out += raw[i];
      } else {
        out += raw[i];
      }
    }
    v.s = out;
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = Kind::Bool;
    v.b = raw == "true";
    return v;
  }
  if (looks_like_int(raw)) {
    v.kind = Kind::Int;
    v.i = std::stoll(raw);
    return v;
  }
  try {
    size_t pos = 0;
    double d = std::stod(raw, &pos);
    if (pos == raw.size()) {
      v.kind = Kind::Float;
      v.d = d;
      return v;
    }
  } catch (const std::exception&) {
  }
  // bare word: treat as string (task names etc. read naturally in overrides)
  v.kind = Kind::String;
  v.s = raw;
  return v;
}

std::string ConfigValue::to_toml() const {
  switch (kind) {
    case Kind::Int:
      return std::to_string(i);
    case Kind::Bool:
      return b ? "true" : "false";
    case Kind::Float:
      // shortest round-trip decimal; keep a float marker
      {
        std::string s = nlohmann::json(d).dump();
        if (s.find('.') == std::string::npos &&
            s.find('e') == std::string::npos &&
            s.find("inf") == std::string::npos) {
          s += ".0";
        }
        return s;
      }
    case Kind::String: {
      std::string out = "\"";
      for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      return out + "\"";
    }
  }
  return "";
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::runtime_error("config: bad section header at line " +
                                 std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: expected key = value at line " +
                               std::to_string(lineno));
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error("config: empty key at line " +
                               std::to_string(lineno));
    }
    std::string path = section.empty() ? key : section + "." + key;
    cfg.values_[path] = ConfigValue::parse_literal(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

int64_t Config::get_int(const std::string& path, int64_t def) const {
  auto it = values_.find(path);
  if (it == values_.end()) return def;
  const ConfigValue& v = it->second;
  if (v.kind == ConfigValue::Kind::Int) return v.i;
  throw std::runtime_error("config: " + path + " is not an integer");
}

double Config::get_double(const std::string& path, double def) const {
  auto it = values_.find(path);
  if (it == values_.end()) return def;
  const ConfigValue& v = it->second;
  if (v.kind == ConfigValue::Kind::Float) return v.d;
  if (v.kind == ConfigValue::Kind::Int) return static_cast<double>(v.i);
  throw std::runtime_error("config: " + path + " is not a number");
}

bool Config::get_bool(const std::string& path, bool def) const {
  auto it = values_.find(path);
  if (it == values_.end()) return def;
  if (it->second.kind != ConfigValue::Kind::Bool) {
    throw std::runtime_error("config: " + path + " is not a boolean");
  }
  return it->second.b;
}

std::string Config::get_string(const std::string& path,
                               const std::string& def) const {
  auto it = values_.find(path);
  if (it == values_.end()) return def;
  if (it->second.kind != ConfigValue::Kind::String) {
    throw std::runtime_error("config: " + path + " is not a string");
  }
  return it->second.s;
}

void Config::apply_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("override must be key=value: " + assignment);
  }
  std::string key = trim(assignment.substr(0, eq));
  values_[key] = ConfigValue::parse_literal(assignment.substr(eq + 1));
}

std::vector<std::string> Config::paths() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::string Config::serialize() const {
  // top-level keys first (they must precede any section header), then
  // sections in sorted path order
  std::string out;
  for (const auto& [path, value] : values_) {
    if (path.find('.') == std::string::npos) {
      out += path + " = " + value.to_toml() + "\n";
    }
  }
  std::string current_section;
  for (const auto& [path, value] : values_) {
    size_t dot = path.rfind('.');
    if (dot == std::string::npos) continue;
    std::string section = path.substr(0, dot);
    std::string key = path.substr(dot + 1);
    if (section != current_section) {
      if (!out.empty()) out += "\n";
      out += "[" + section + "]\n";
      current_section = section;
    }
    out += key + " = " + value.to_toml() + "\n";
  }
  return out;
}

}  // namespace tpc
