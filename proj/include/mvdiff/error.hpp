#pragma once

#include <stdexcept>
#include <string>

namespace mvdiff {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Triangulation system is rank-deficient or the point is at infinity.
struct DegenerateTriangulation : Error {
  explicit DegenerateTriangulation(const std::string& msg) : Error(msg) {}
};

// Checkpoint file is corrupt, truncated, or has a wrong version.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace mvdiff
