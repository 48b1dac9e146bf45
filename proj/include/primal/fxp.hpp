#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

#include "primal/types.hpp"

namespace primal {

// Numeric environment shared by the golden model and the cycle simulator.
// A Word is either an IEEE double (float mode) or a Q(frac_bits) fixed-point
// raw integer (fixed mode). Fixed-point arithmetic is pure 64/128-bit integer
// math with round-half-away, so two independent evaluations of the same
// scalar expression are bit-identical regardless of platform.
class Arith {
 public:
  static Arith float64() { return Arith(false, 0); }
  static Arith fixed(int frac_bits) { return Arith(true, frac_bits); }

  bool fixed_mode() const { return fixed_; }
  int frac_bits() const { return frac_; }

  Word from_double(double x) const {
    if (!fixed_) return bits(x);
    return static_cast<Word>(std::llround(x * std::ldexp(1.0, frac_)));
  }
  double to_double(Word w) const {
    if (!fixed_) return val(w);
    return std::ldexp(static_cast<double>(w), -frac_);
  }

  Word zero() const { return 0; }  // 0.0 and fixed 0 share the bit pattern

  Word add(Word a, Word b) const {
    if (fixed_) return a + b;
    return bits(val(a) + val(b));
  }
  Word sub(Word a, Word b) const {
    if (fixed_) return a - b;
    return bits(val(a) - val(b));
  }
  Word mul(Word a, Word b) const {
    if (!fixed_) return bits(val(a) * val(b));
    __int128 p = static_cast<__int128>(a) * static_cast<__int128>(b);
    return round_shift(p, frac_);
  }
  // a / b in the active format; b must be nonzero.
  Word div(Word a, Word b) const {
    if (!fixed_) return bits(val(a) / val(b));
    __int128 n = static_cast<__int128>(a) << frac_;
    __int128 q = n / b;
    __int128 r = n % b;
    __int128 ab = b < 0 ? -static_cast<__int128>(b) : static_cast<__int128>(b);
    __int128 ar = r < 0 ? -r : r;
    if (2 * ar >= ab) q += ((n < 0) == (b < 0)) ? 1 : -1;  // half away from zero
    return static_cast<Word>(q);
  }
  bool less(Word a, Word b) const {
    if (fixed_) return a < b;
    return val(a) < val(b);
  }
  Word max(Word a, Word b) const { return less(a, b) ? b : a; }

  // exp(x). Fixed mode: base-2 decomposition with a degree-4 polynomial for
  // the fractional part, all in integer arithmetic.
  Word exp(Word x) const {
    if (!fixed_) return bits(std::exp(val(x)));
    const Word one = Word(1) << frac_;
    if (x <= -(Word(30) << frac_)) return 0;
    const Word log2e = from_double(1.4426950408889634);
    const Word ln2 = from_double(0.6931471805599453);
    Word t = mul(x, log2e);
    Word k = t >> frac_;  // floor (arithmetic shift)
    Word f = t - (k << frac_);
    // 2^f = e^(f ln2), Taylor to 4th order on f in [0,1)
    Word u = mul(f, ln2);
    Word p = one;
    Word term = u;
    p += term;
    term = mul(term, u) / 2;
    p += term;
    term = mul(term, u) / 3;  // u^3/6 built incrementally
    p += term;
    term = mul(term, u) / 4;
    p += term;
    if (k >= 0) {
      if (k >= 62 - frac_) return Word(1) << 62;  // saturate
      return p << k;
    }
    return round_shift(static_cast<__int128>(p), static_cast<int>(-k));
  }

  bool operator==(const Arith&) const = default;

 private:
  Arith(bool fixed, int frac) : fixed_(fixed), frac_(frac) {}

  static Word bits(double d) {
    Word w;
    std::memcpy(&w, &d, sizeof(w));
    return w;
  }
  static double val(Word w) {
    double d;
    std::memcpy(&d, &w, sizeof(d));
    return d;
  }
  static Word round_shift(__int128 p, int sh) {
    __int128 half = static_cast<__int128>(1) << (sh - 1);
    if (p >= 0) return static_cast<Word>((p + half) >> sh);
    return static_cast<Word>(-((-p + half) >> sh));
  }

  bool fixed_;
  int frac_;
};

}  // namespace primal
