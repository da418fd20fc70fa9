// Grid of discrete code indices for one measure; (13,4) entries in [0,256)
// under the reference configuration.

#pragma once

#include <cstdint>
#include <vector>

#include "recomp/error.hpp"

namespace recomp {

struct CodeGrid {
  int64_t rows = 0, cols = 0;
  std::vector<uint16_t> codes;  // row-major

  static CodeGrid zeros(int64_t rows, int64_t cols) {
    CodeGrid g;
    g.rows = rows;
    g.cols = cols;
    g.codes.assign(size_t(rows * cols), 0);
    return g;
  }

  uint16_t& at(int64_t r, int64_t c) { return codes[size_t(r * cols + c)]; }
  uint16_t at(int64_t r, int64_t c) const { return codes[size_t(r * cols + c)]; }

  bool operator==(const CodeGrid&) const = default;
};

}  // namespace recomp
