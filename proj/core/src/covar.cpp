#include "axcv/covar.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <string>

#include "axcv/error.hpp"

namespace axcv {

std::string_view to_string(ConstantPrecision p) {
  switch (p) {
    case ConstantPrecision::Exact: return "exact";
    case ConstantPrecision::Fixed8: return "fixed8";
    case ConstantPrecision::PaperWidth: return "paper-width";
  }
  return "unknown";
}

ConstantPrecision parse_constant_precision(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "exact" || lower == "unrounded") return ConstantPrecision::Exact;
  if (lower == "fixed8") return ConstantPrecision::Fixed8;
  if (lower == "paper-width" || lower == "paper") return ConstantPrecision::PaperWidth;
  throw ConfigError("unknown constant precision '" + std::string(text) + "'");
}

Rational w_hat(std::uint8_t w, unsigned m) {
  std::int64_t twice = 0;
  for (unsigned i = 0; i < m; ++i) {
    const std::uint64_t modulus = std::uint64_t{1} << (m - i);
    twice += static_cast<std::int64_t>((w % modulus) << i);
  }
  return {twice, 2};
}

namespace {

// Integer bits needed for the largest C the family can produce.
unsigned constant_int_bits(const AxMultConfig& cfg) {
  switch (cfg.kind) {
    case MultKind::Exact: return 0;
    case MultKind::Perforated: return kOperandBits;
    case MultKind::Recursive: return cfg.m;
    case MultKind::Truncated: {
      const Rational top = w_hat(static_cast<std::uint8_t>(kOperandMax), cfg.m);
      return bits_for(static_cast<std::uint64_t>((top.num + top.den - 1) / top.den));
    }
  }
  return 0;
}

std::int64_t lcm64(std::int64_t a, std::int64_t b) { return std::lcm(a, b); }

}  // namespace

ConstantFormat constant_format(const AxMultConfig& cfg, ConstantPrecision precision) {
  ConstantFormat fmt;
  fmt.int_bits = constant_int_bits(cfg);
  fmt.paper_range = fmt.int_bits <= kOperandBits;
  switch (precision) {
    case ConstantPrecision::Exact:
      fmt.exact = true;
      break;
    case ConstantPrecision::Fixed8:
      fmt.frac_bits = 8;
      break;
    case ConstantPrecision::PaperWidth:
      fmt.frac_bits = fmt.paper_range ? kOperandBits - fmt.int_bits : 0;
      break;
  }
  return fmt;
}

FilterConstants derive_constants(const AxMultConfig& cfg, const Filter& filter,
                                 ConstantPrecision precision) {
  validate(cfg);
  if (filter.weights.empty()) throw ShapeError("filter must contain at least one weight");

  FilterConstants out;
  out.mult = cfg;
  out.precision = precision;
  out.format = constant_format(cfg, precision);
  out.c0_exact = {0, 1};
  out.c_exact = {0, 1};

  const auto k = static_cast<std::int64_t>(filter.weights.size());
  switch (cfg.kind) {
    case MultKind::Exact:
      break;
    case MultKind::Perforated: {
      std::int64_t total = 0;
      for (auto w : filter.weights) total += w;
      out.c_exact = make_rational(total, k);
      break;
    }
    case MultKind::Recursive: {
      std::int64_t total = 0;
      for (auto w : filter.weights) total += w & cfg.low_mask();
      out.c_exact = make_rational(total, k);
      break;
    }
    case MultKind::Truncated: {
      std::int64_t twice_total = 0;
      out.w_hat.reserve(filter.weights.size());
      for (auto w : filter.weights) {
        out.w_hat.push_back(w_hat(w, cfg.m));
        twice_total += out.w_hat.back().num;
      }
      out.c_exact = make_rational(twice_total, 2 * k);
      out.c0_exact = make_rational(twice_total, std::int64_t{2} << cfg.m);
      break;
    }
  }

  out.c_real = out.c_exact.to_double();
  out.c0 = round_half_even(out.c0_exact.num, out.c0_exact.den);
  out.c = out.format.exact ? out.c_exact : to_fixed_point(out.c_exact, out.format.frac_bits);

  const ConstantFormat narrow = constant_format(cfg, ConstantPrecision::PaperWidth);
  const Rational as_narrow = to_fixed_point(out.c_exact, narrow.frac_bits);
  out.fits_paper_width = as_narrow.num <= static_cast<std::int64_t>(kOperandMax);
  return out;
}

std::int64_t variate_term(const FilterConstants& consts, std::uint64_t sum_x) {
  return round_half_even(static_cast<int128_t>(consts.c.num) * static_cast<int128_t>(sum_x),
                         consts.c.den);
}

std::int64_t control_variate(const FilterConstants& consts, std::uint64_t sum_x) {
  return variate_term(consts, sum_x) + consts.c0;
}

std::int64_t folded_bias(const FilterConstants& consts, std::int64_t bias) {
  return bias + consts.c0;
}

namespace {

void check_lengths(const Filter& filter, std::span<const std::uint8_t> activations) {
  if (activations.size() != filter.weights.size()) {
    throw ShapeError("activation count " + std::to_string(activations.size()) +
                     " does not match filter length " + std::to_string(filter.weights.size()));
  }
}

}  // namespace

std::int64_t exact_dot(const Filter& filter, std::span<const std::uint8_t> activations) {
  check_lengths(filter, activations);
  std::int64_t acc = filter.bias;
  for (std::size_t j = 0; j < activations.size(); ++j) {
    acc += multiply_exact(filter.weights[j], activations[j]);
  }
  return acc;
}

std::int64_t approx_dot(const AxMultConfig& cfg, const Filter& filter,
                        std::span<const std::uint8_t> activations) {
  check_lengths(filter, activations);
  validate(cfg);
  return dispatch_kind(cfg.kind, [&]<MultKind K>() {
    std::int64_t acc = filter.bias;
    for (std::size_t j = 0; j < activations.size(); ++j) {
      acc += kernel::product<K>(filter.weights[j], activations[j], cfg.m);
    }
    return acc;
  });
}

std::uint64_t sum_x(const AxMultConfig& cfg, std::span<const std::uint8_t> activations) {
  validate(cfg);
  return dispatch_kind(cfg.kind, [&]<MultKind K>() {
    std::uint64_t total = 0;
    for (auto a : activations) total += kernel::x_input<K>(a, cfg.m);
    return total;
  });
}

std::int64_t corrected_dot(const FilterConstants& consts, const Filter& filter,
                           std::span<const std::uint8_t> activations) {
  const AxMultConfig& cfg = consts.mult;
  if (cfg.kind == MultKind::Exact) return exact_dot(filter, activations);
  const std::int64_t approx = approx_dot(cfg, filter, activations) - filter.bias;
  return folded_bias(consts, filter.bias) + approx + variate_term(consts, sum_x(cfg, activations));
}

std::int64_t corrected_dot(const AxMultConfig& cfg, const Filter& filter,
                           std::span<const std::uint8_t> activations,
                           ConstantPrecision precision) {
  check_lengths(filter, activations);
  return corrected_dot(derive_constants(cfg, filter, precision), filter, activations);
}

std::int64_t conv_error(const AxMultConfig& cfg, const Filter& filter,
                        std::span<const std::uint8_t> activations, ConstantPrecision precision) {
  return exact_dot(filter, activations) - corrected_dot(cfg, filter, activations, precision);
}

std::int64_t conv_error_baseline(const AxMultConfig& cfg, const Filter& filter,
                                 std::span<const std::uint8_t> activations) {
  check_lengths(filter, activations);
  validate(cfg);
  std::int64_t total = 0;
  for (std::size_t j = 0; j < activations.size(); ++j) {
    total += mult_error(cfg, filter.weights[j], activations[j]);
  }
  return total;
}

Rational analytic_conv_error(const FilterConstants& consts, const Filter& filter,
                             std::span<const std::uint8_t> activations) {
  const std::int64_t eps = conv_error_baseline(consts.mult, filter, activations);
  if (consts.mult.kind == MultKind::Exact) return {eps, 1};
  const std::uint64_t sx = sum_x(consts.mult, activations);
  const std::int64_t den = lcm64(consts.c_exact.den, consts.c0_exact.den);
  const int128_t num = static_cast<int128_t>(eps) * den -
                       static_cast<int128_t>(consts.c_exact.num) * (den / consts.c_exact.den) *
                           static_cast<int128_t>(sx) -
                       static_cast<int128_t>(consts.c0_exact.num) * (den / consts.c0_exact.den);
  return make_rational(static_cast<std::int64_t>(num), den);
}

}  // namespace axcv
