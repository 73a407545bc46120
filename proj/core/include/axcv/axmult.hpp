#pragma once

// Bit-exact models of the unsigned n x n multipliers: exact, partial-product
// perforation (s = 0), recursive with the low x low sub-product pruned, and
// column truncation. Each family also has a closed-form error expression
// that is kept independent of the product kernel so the two can be checked
// against each other.

#include <cstdint>
#include <string>
#include <string_view>

namespace axcv {

inline constexpr unsigned kOperandBits = 8;
inline constexpr std::uint32_t kOperandMax = (1u << kOperandBits) - 1;

enum class MultKind : std::uint8_t { Exact, Perforated, Recursive, Truncated };

std::string_view to_string(MultKind kind);
/// Accepts "exact", "perforated", "recursive", "truncated" (case-insensitive).
MultKind parse_mult_kind(std::string_view text);

/// Exclusive upper bound on the approximation level for a family.
constexpr unsigned level_limit(MultKind kind) {
  switch (kind) {
    case MultKind::Exact: return 1;
    case MultKind::Perforated:
    case MultKind::Recursive: return kOperandBits;
    case MultKind::Truncated: return 2 * kOperandBits - 1;
  }
  return 0;
}

struct AxMultConfig {
  MultKind kind = MultKind::Exact;
  unsigned m = 0;

  /// Validated constructor; throws ConfigError when m is out of range.
  static AxMultConfig make(MultKind kind, unsigned m);
  static AxMultConfig exact() { return {}; }

  std::uint32_t low_mask() const { return (1u << m) - 1u; }
  /// Number of implicit trailing zero bits in every product of this config.
  unsigned shift() const { return kind == MultKind::Exact ? 0 : m; }

  friend bool operator==(const AxMultConfig&, const AxMultConfig&) = default;
};

void validate(const AxMultConfig& cfg);
std::string describe(const AxMultConfig& cfg);

/// A product together with the number of trailing bits known to be zero.
struct UProduct {
  std::uint32_t value = 0;
  unsigned shift = 0;

  std::uint32_t reduced() const { return value >> shift; }
};

namespace kernel {

constexpr std::uint32_t perforated(std::uint32_t w, std::uint32_t a, unsigned m) {
  std::uint32_t acc = 0;
  for (unsigned i = m; i < kOperandBits; ++i) {
    if ((a >> i) & 1u) acc += w << i;
  }
  return acc;
}

constexpr std::uint32_t recursive(std::uint32_t w, std::uint32_t a, unsigned m) {
  const std::uint32_t mask = (1u << m) - 1u;
  const std::uint32_t wl = w & mask, wh = w >> m;
  const std::uint32_t al = a & mask, ah = a >> m;
  return (((wh * ah) << m) + wh * al + wl * ah) << m;
}

constexpr std::uint32_t truncated(std::uint32_t w, std::uint32_t a, unsigned m) {
  std::uint32_t acc = 0;
  for (unsigned i = 0; i < kOperandBits; ++i) {
    if (((a >> i) & 1u) == 0) continue;
    const unsigned first = m > i ? m - i : 0;  // lowest weight bit kept in row i
    if (first >= kOperandBits) continue;
    acc += (w & ~((1u << first) - 1u)) << i;
  }
  return acc;
}

constexpr std::uint32_t perforated_error(std::uint32_t w, std::uint32_t a, unsigned m) {
  return w * (a & ((1u << m) - 1u));
}

constexpr std::uint32_t recursive_error(std::uint32_t w, std::uint32_t a, unsigned m) {
  const std::uint32_t mask = (1u << m) - 1u;
  return (w & mask) * (a & mask);
}

constexpr std::uint32_t truncated_error(std::uint32_t w, std::uint32_t a, unsigned m) {
  std::uint32_t err = 0;
  for (unsigned i = 0; i < m && i < kOperandBits; ++i) {
    if ((a >> i) & 1u) err += (w & ((1u << (m - i)) - 1u)) << i;
  }
  return err;
}

template <MultKind K>
constexpr std::uint32_t product(std::uint32_t w, std::uint32_t a, unsigned m) {
  if constexpr (K == MultKind::Perforated) return perforated(w, a, m);
  else if constexpr (K == MultKind::Recursive) return recursive(w, a, m);
  else if constexpr (K == MultKind::Truncated) return truncated(w, a, m);
  else return w * a;
}

template <MultKind K>
constexpr std::uint32_t error(std::uint32_t w, std::uint32_t a, unsigned m) {
  if constexpr (K == MultKind::Perforated) return perforated_error(w, a, m);
  else if constexpr (K == MultKind::Recursive) return recursive_error(w, a, m);
  else if constexpr (K == MultKind::Truncated) return truncated_error(w, a, m);
  else return 0;
}

template <MultKind K>
constexpr std::uint32_t x_input(std::uint32_t a, unsigned m) {
  const std::uint32_t low = a & ((1u << m) - 1u);
  if constexpr (K == MultKind::Truncated) return low != 0 ? 1u : 0u;
  else if constexpr (K == MultKind::Exact) return 0;
  else return low;
}

}  // namespace kernel

constexpr std::uint16_t multiply_exact(std::uint8_t w, std::uint8_t a) {
  return static_cast<std::uint16_t>(std::uint32_t{w} * std::uint32_t{a});
}

UProduct multiply_approx(const AxMultConfig& cfg, std::uint8_t w, std::uint8_t a);

/// Closed-form error W*A - AM(W, A).
std::uint16_t mult_error(const AxMultConfig& cfg, std::uint8_t w, std::uint8_t a);

/// Control-variate input x for one activation: the m low bits for
/// perforated/recursive, their OR for truncated. Throws for kind Exact.
std::uint32_t x_value(const AxMultConfig& cfg, std::uint8_t a);

/// Upper bound on mult_error over all operands.
std::uint32_t max_mult_error(const AxMultConfig& cfg);

/// Largest value x_value can take.
std::uint32_t max_x_value(const AxMultConfig& cfg);

/// Calls fn.template operator()<K>() with K = cfg.kind as a compile-time value.
template <typename Fn>
decltype(auto) dispatch_kind(MultKind kind, Fn&& fn) {
  switch (kind) {
    case MultKind::Perforated: return fn.template operator()<MultKind::Perforated>();
    case MultKind::Recursive: return fn.template operator()<MultKind::Recursive>();
    case MultKind::Truncated: return fn.template operator()<MultKind::Truncated>();
    case MultKind::Exact: break;
  }
  return fn.template operator()<MultKind::Exact>();
}

}  // namespace axcv
