#include "dcpo/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dcpo {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!cfg.values_.count(key)) cfg.order_.push_back(key);
    cfg.values_[key] = value;
    cfg.lines_[key] = lineno;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse(in);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::optional<std::string> KeyValueConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  mark_used(key);
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
  auto v = raw(key);
  if (!v) throw ConfigError("missing required config key '" + key + "'");
  return *v;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto v = raw(key);
  return v ? *v : fallback;
}

long long KeyValueConfig::get_int(const std::string& key) const {
  std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line_of(key)) + ": key '" + key +
                      "' expects an integer, got '" + v + "'");
  }
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
  std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line_of(key)) + ": key '" + key +
                      "' expects a number, got '" + v + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("line " + std::to_string(line_of(key)) + ": key '" + key +
                    "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (const std::string& k : order_)
    if (k.rfind(prefix, 0) == 0 && values_.count(k)) out.push_back(k);
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) order_.push_back(key);
  values_[key] = value;
  if (!lines_.count(key)) lines_[key] = 0;
}

void KeyValueConfig::erase_prefix(const std::string& prefix) {
  for (auto it = values_.begin(); it != values_.end();) {
    if (it->first.rfind(prefix, 0) == 0)
      it = values_.erase(it);
    else
      ++it;
  }
  order_.erase(std::remove_if(order_.begin(), order_.end(),
                              [&](const std::string& k) {
                                return k.rfind(prefix, 0) == 0;
                              }),
               order_.end());
}

void KeyValueConfig::mark_used(const std::string& key) const { used_[key] = true; }

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const std::string& k : order_)
    if (values_.count(k) && !used_.count(k)) out.push_back(k);
  return out;
}

int KeyValueConfig::line_of(const std::string& key) const {
  auto it = lines_.find(key);
  return it == lines_.end() ? 0 : it->second;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError(what + ": expected integer list, got '" + text + "'");
    }
  }
  return out;
}

}  // namespace dcpo
