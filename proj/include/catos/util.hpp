#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace catos {

namespace fs = std::filesystem;
using Json = nlohmann::json;

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view contents);

/// Fixed-point formatting independent of the global locale.
std::string format_fixed(double value, int decimals);

std::vector<std::string_view> split(std::string_view text, char sep);
std::optional<std::int64_t> parse_int(std::string_view text);
std::optional<double> parse_double(std::string_view text);

/// Lines of a text file without their LF terminators. A trailing LF does not
/// produce an empty final line.
std::vector<std::string_view> split_lines(std::string_view text);

/// Walks a JSON object while collecting every problem instead of stopping at
/// the first one. Keys that are never read are reported as unknown by
/// finish().
class JsonFields {
 public:
  JsonFields(const Json& object, std::string path, std::vector<std::string>& errors);

  template <typename T>
  void read(const char* key, T& out);

  /// Returns the sub-object if present (and an object), else nullptr.
  const Json* object(const char* key);

  bool has(const char* key) const;
  const std::string& path() const { return path_; }
  void error(const std::string& message);
  void finish();

 private:
  const Json* find(const char* key);

  const Json& object_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::vector<std::string> seen_;
  bool is_object_;
};

template <typename T>
void JsonFields::read(const char* key, T& out) {
  const Json* value = find(key);
  if (value == nullptr) return;
  try {
    out = value->get<T>();
  } catch (const nlohmann::json::exception&) {
    error(std::string(key) + ": wrong type");
  }
}

}  // namespace catos
