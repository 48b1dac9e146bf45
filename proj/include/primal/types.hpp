#pragma once

#include <compare>
#include <cstdint>
#include <cstdlib>
#include <ostream>

namespace primal {

// One scalar value as it travels on the mesh: a 64-bit word, one flit on the
// 64-bit bus. Fixed-point mode stores the raw integer, float mode stores the
// IEEE double bit pattern (see Arith in fxp.hpp).
using Word = std::int64_t;

// Router / PE coordinate on the 2D mesh.
struct RC {
  int row = 0;
  int col = 0;
  auto operator<=>(const RC&) const = default;
};

inline int manhattan(RC a, RC b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

inline std::ostream& operator<<(std::ostream& os, RC rc) {
  return os << "(" << rc.row << "," << rc.col << ")";
}

}  // namespace primal
