#pragma once

// Golden-file comparison. Set NEUCALL_UPDATE_GOLDEN=1 to rewrite the asset instead of comparing;
// regenerated goldens must be reviewed before they are committed.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace golden {

inline std::filesystem::path asset(const std::string& name) { return std::filesystem::path(NEUCALL_TEST_ASSETS) / name; }

inline std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// True when `actual` equals the stored asset (or the asset was just rewritten).
inline bool matches(const std::string& name, const std::string& actual) {
  const auto path = asset(name);
  if (const char* u = std::getenv("NEUCALL_UPDATE_GOLDEN"); u && std::string(u) == "1") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << actual;
    return true;
  }
  return std::filesystem::exists(path) && read(path) == actual;
}

}  // namespace golden
