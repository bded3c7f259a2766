#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmtgin {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Flat `key = value` lines. Blank lines and lines starting with '#' are
// skipped; repeated keys are errors.
std::vector<KeyValue> parse_key_values(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

double value_as_real(const KeyValue& kv);
std::size_t value_as_count(const KeyValue& kv);
std::uint64_t value_as_seed(const KeyValue& kv);
bool value_as_bool(const KeyValue& kv);

}  // namespace hmtgin
