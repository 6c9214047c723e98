#pragma once

#include <map>
#include <string>

#include "catos/util.hpp"

namespace testsupport {

/// Fresh empty directory under the test's working directory.
inline catos::fs::path scratch(const std::string& name) {
  const catos::fs::path p = catos::fs::current_path() / "scratch" / name;
  catos::fs::remove_all(p);
  catos::fs::create_directories(p);
  return p;
}

inline catos::fs::path data(const std::string& rel) { return catos::fs::path(CATOS_TEST_DATA) / rel; }

/// Relative path -> file contents for every regular file under root.
inline std::map<std::string, std::string> tree(const catos::fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : catos::fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[catos::fs::relative(e.path(), root).generic_string()] = catos::read_file(e.path());
  }
  return out;
}

}  // namespace testsupport
