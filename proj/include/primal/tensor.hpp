#pragma once

#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

#include "primal/fxp.hpp"
#include "primal/types.hpp"

namespace primal {

// Dense row-major matrix of Words in the active numeric format.
struct Tensor2D {
  int rows = 0;
  int cols = 0;
  std::vector<Word> v;

  Tensor2D() = default;
  Tensor2D(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0) {}

  Word& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  Word at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  std::span<const Word> row(int r) const {
    return {v.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  bool empty() const { return rows == 0 || cols == 0; }

  bool operator==(const Tensor2D&) const = default;
};

// splitmix64; used for all synthetic data so streams are reproducible
// across platforms and standard libraries.
struct SplitMix64 {
  std::uint64_t s;
  explicit SplitMix64(std::uint64_t seed) : s(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // uniform in [lo, hi)
  double uniform(double lo, double hi) {
    double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }
};

inline Tensor2D random_tensor(int rows, int cols, std::uint64_t seed, double lo,
                              double hi, const Arith& ar) {
  Tensor2D t(rows, cols);
  SplitMix64 rng(seed);
  for (auto& w : t.v) w = ar.from_double(rng.uniform(lo, hi));
  return t;
}

inline Tensor2D tensor_from_doubles(int rows, int cols,
                                    std::span<const double> d, const Arith& ar) {
  assert(static_cast<int>(d.size()) == rows * cols);
  Tensor2D t(rows, cols);
  for (size_t i = 0; i < d.size(); ++i) t.v[i] = ar.from_double(d[i]);
  return t;
}

}  // namespace primal
