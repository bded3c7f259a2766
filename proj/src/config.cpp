#include "hmtgin/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hmtgin/graph.hpp"

namespace hmtgin {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

ConfigError bad_value(const KeyValue& kv, const std::string& what) {
  return ConfigError("line " + std::to_string(kv.line) + ": " + kv.key +
                     " expects " + what + ", got '" + kv.value + "'");
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t ln = 0;
  while (std::getline(in, raw)) {
    ++ln;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(ln) + ": expected 'key = value'");
    }
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), ln};
    if (kv.key.empty() || kv.value.empty()) {
      throw ConfigError("line " + std::to_string(ln) + ": empty key or value");
    }
    if (!seen.insert(kv.key).second) {
      throw ConfigError("line " + std::to_string(ln) + ": repeated key '" +
                        kv.key + "'");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double value_as_real(const KeyValue& kv) {
  try {
    const double v = parse_real(kv.value);
    if (!std::isfinite(v)) throw bad_value(kv, "a finite real");
    return v;
  } catch (const std::invalid_argument&) {
    throw bad_value(kv, "a real number");
  }
}

std::size_t value_as_count(const KeyValue& kv) {
  std::size_t v = 0;
  const auto* end = kv.value.data() + kv.value.size();
  const auto res = std::from_chars(kv.value.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw bad_value(kv, "a non-negative integer");
  }
  return v;
}

std::uint64_t value_as_seed(const KeyValue& kv) {
  std::uint64_t v = 0;
  const auto* end = kv.value.data() + kv.value.size();
  const auto res = std::from_chars(kv.value.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw bad_value(kv, "an unsigned integer seed");
  }
  return v;
}

bool value_as_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "1" || kv.value == "yes") return true;
  if (kv.value == "false" || kv.value == "0" || kv.value == "no") return false;
  throw bad_value(kv, "true or false");
}

}  // namespace hmtgin
