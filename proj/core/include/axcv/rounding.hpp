#pragma once

#include <cstdint>

namespace axcv {

__extension__ typedef __int128 int128_t;

/// Exact rational with a positive denominator. Used for the control-variate
/// constants so the unrounded and the fixed-point variants share one type.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend bool operator==(const Rational& a, const Rational& b) {
    return static_cast<int128_t>(a.num) * b.den == static_cast<int128_t>(b.num) * a.den;
  }
};

Rational make_rational(std::int64_t num, std::int64_t den);

/// round(num / den), ties to even. den must be positive.
std::int64_t round_half_even(int128_t num, std::int64_t den);

/// round(value * 2^frac_bits / 1) expressed as a Rational with denominator 2^frac_bits.
Rational to_fixed_point(const Rational& value, unsigned frac_bits);

/// Smallest bit count able to hold every integer in [0, max_value].
unsigned bits_for(std::uint64_t max_value);

/// ceil(log2(x)) for x >= 1.
unsigned ceil_log2(std::uint64_t x);

}  // namespace axcv
