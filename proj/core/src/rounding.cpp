#include "axcv/rounding.hpp"

#include <numeric>

#include "axcv/error.hpp"

namespace axcv {

Rational make_rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw ConfigError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return {num, den};
}

std::int64_t round_half_even(int128_t num, std::int64_t den) {
  int128_t q = num / den;
  int128_t r = num % den;
  if (r < 0) {  // floor division
    q -= 1;
    r += den;
  }
  const int128_t twice = 2 * r;
  if (twice > den || (twice == den && (q & 1) != 0)) q += 1;
  return static_cast<std::int64_t>(q);
}

Rational to_fixed_point(const Rational& value, unsigned frac_bits) {
  const std::int64_t scale = std::int64_t{1} << frac_bits;
  return {round_half_even(static_cast<int128_t>(value.num) * scale, value.den), scale};
}

unsigned bits_for(std::uint64_t max_value) {
  unsigned bits = 0;
  while (bits < 64 && (max_value >> bits) != 0) ++bits;
  return bits;
}

unsigned ceil_log2(std::uint64_t x) {
  if (x <= 1) return 0;
  return bits_for(x - 1);
}

}  // namespace axcv
