#pragma once

// Control-variate correction of an approximate dot product
//
//   G* = B + sum_j AM(W_j, A_j) + V,   V = C * sum_j x_j + C0
//
// with C chosen per filter so that the expected error vanishes and its
// variance is minimised: the weight mean (perforated), the mean of the low
// weight bits (recursive), or the mean expected truncation error W_hat
// (truncated, which additionally needs the offset C0).

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "axcv/axmult.hpp"
#include "axcv/rounding.hpp"

namespace axcv {

/// How C is represented once derived.
enum class ConstantPrecision : std::uint8_t {
  Exact,       // exact rational, no rounding of C
  Fixed8,      // 8 fractional bits (default runtime representation)
  PaperWidth,  // 8-bit MAC+ multiplier operand, fraction bits = 8 - integer bits
};

std::string_view to_string(ConstantPrecision p);
ConstantPrecision parse_constant_precision(std::string_view text);

struct Filter {
  std::vector<std::uint8_t> weights;
  std::int64_t bias = 0;

  std::size_t size() const { return weights.size(); }
};

/// Fixed-point layout used for C by a (kind, m, precision) combination.
struct ConstantFormat {
  unsigned int_bits = 0;
  unsigned frac_bits = 0;
  bool exact = false;        // ConstantPrecision::Exact: no rounding at all
  bool paper_range = true;   // false when the kind's C range needs > 8 bits
};

ConstantFormat constant_format(const AxMultConfig& cfg, ConstantPrecision precision);

struct FilterConstants {
  AxMultConfig mult;
  ConstantPrecision precision = ConstantPrecision::Fixed8;
  Rational c;               // C as applied in hardware
  Rational c_exact;         // unrounded C
  double c_real = 0.0;      // c_exact as a double, diagnostics only
  Rational c0_exact;        // mean-nullifying offset (nonzero for truncated)
  std::int64_t c0 = 0;      // round_half_even(c0_exact), folded into the bias
  std::vector<Rational> w_hat;  // truncated only, one per weight
  ConstantFormat format;
  bool fits_paper_width = true;  // C representable in the 8-bit MAC+ operand
};

/// Mean truncation error of weight w over uniformly distributed activations:
/// 1/2 * sum_{i<m} (w mod 2^(m-i)) * 2^i.
Rational w_hat(std::uint8_t w, unsigned m);

FilterConstants derive_constants(const AxMultConfig& cfg, const Filter& filter,
                                 ConstantPrecision precision = ConstantPrecision::Fixed8);

/// round_half_even(C * sum_x); the runtime part of V (C0 lives in the bias).
std::int64_t variate_term(const FilterConstants& consts, std::uint64_t sum_x);

/// V = round_half_even(C * sum_x) + C0.
std::int64_t control_variate(const FilterConstants& consts, std::uint64_t sum_x);

/// Bias with C0 folded in offline.
std::int64_t folded_bias(const FilterConstants& consts, std::int64_t bias);

/// G = B + sum W_j * A_j.
std::int64_t exact_dot(const Filter& filter, std::span<const std::uint8_t> activations);

/// B + sum AM(W_j, A_j), i.e. the approximate result without the variate.
std::int64_t approx_dot(const AxMultConfig& cfg, const Filter& filter,
                        std::span<const std::uint8_t> activations);

/// G* using precomputed constants (whose bias folding is applied here).
std::int64_t corrected_dot(const FilterConstants& consts, const Filter& filter,
                           std::span<const std::uint8_t> activations);

/// G*; kind Exact returns G.
std::int64_t corrected_dot(const AxMultConfig& cfg, const Filter& filter,
                           std::span<const std::uint8_t> activations,
                           ConstantPrecision precision = ConstantPrecision::Fixed8);

/// G - G*.
std::int64_t conv_error(const AxMultConfig& cfg, const Filter& filter,
                        std::span<const std::uint8_t> activations,
                        ConstantPrecision precision = ConstantPrecision::Fixed8);

/// Error without the variate: sum_j eps_j = G - (B + sum AM).
std::int64_t conv_error_baseline(const AxMultConfig& cfg, const Filter& filter,
                                 std::span<const std::uint8_t> activations);

/// Unrounded eps_G* = sum eps_j - C * sum x_j - C0 as an exact rational,
/// evaluated with the exact constants regardless of consts.precision.
Rational analytic_conv_error(const FilterConstants& consts, const Filter& filter,
                             std::span<const std::uint8_t> activations);

/// Sum of x_value over the activations (0 for kind Exact).
std::uint64_t sum_x(const AxMultConfig& cfg, std::span<const std::uint8_t> activations);

}  // namespace axcv
