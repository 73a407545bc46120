#include "axcv/axmult.hpp"

#include <algorithm>
#include <cctype>

#include "axcv/error.hpp"

namespace axcv {

std::string_view to_string(MultKind kind) {
  switch (kind) {
    case MultKind::Exact: return "exact";
    case MultKind::Perforated: return "perforated";
    case MultKind::Recursive: return "recursive";
    case MultKind::Truncated: return "truncated";
  }
  return "unknown";
}

MultKind parse_mult_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "exact") return MultKind::Exact;
  if (lower == "perforated" || lower == "perf") return MultKind::Perforated;
  if (lower == "recursive" || lower == "rec") return MultKind::Recursive;
  if (lower == "truncated" || lower == "trunc") return MultKind::Truncated;
  throw ConfigError("unknown multiplier kind '" + std::string(text) + "'");
}

void validate(const AxMultConfig& cfg) {
  if (cfg.m >= level_limit(cfg.kind)) {
    throw ConfigError("approximation level m=" + std::to_string(cfg.m) + " is out of range for " +
                      std::string(to_string(cfg.kind)) + " (must be < " +
                      std::to_string(level_limit(cfg.kind)) + ")");
  }
}

AxMultConfig AxMultConfig::make(MultKind kind, unsigned m) {
  AxMultConfig cfg{kind, m};
  validate(cfg);
  return cfg;
}

std::string describe(const AxMultConfig& cfg) {
  return std::string(to_string(cfg.kind)) + "/m=" + std::to_string(cfg.m);
}

UProduct multiply_approx(const AxMultConfig& cfg, std::uint8_t w, std::uint8_t a) {
  validate(cfg);
  const std::uint32_t value = dispatch_kind(
      cfg.kind, [&]<MultKind K>() { return kernel::product<K>(w, a, cfg.m); });
  return {value, cfg.shift()};
}

std::uint16_t mult_error(const AxMultConfig& cfg, std::uint8_t w, std::uint8_t a) {
  validate(cfg);
  return static_cast<std::uint16_t>(
      dispatch_kind(cfg.kind, [&]<MultKind K>() { return kernel::error<K>(w, a, cfg.m); }));
}

std::uint32_t x_value(const AxMultConfig& cfg, std::uint8_t a) {
  validate(cfg);
  if (cfg.kind == MultKind::Exact) {
    throw ConfigError("the exact multiplier has no control-variate input");
  }
  return dispatch_kind(cfg.kind, [&]<MultKind K>() { return kernel::x_input<K>(a, cfg.m); });
}

std::uint32_t max_mult_error(const AxMultConfig& cfg) {
  const std::uint32_t low = cfg.low_mask();
  switch (cfg.kind) {
    case MultKind::Exact: return 0;
    case MultKind::Perforated: return kOperandMax * low;
    case MultKind::Recursive: return low * low;
    case MultKind::Truncated:
      // m * 2^m - (2^m - 1), capped by the full product once m exceeds n.
      return std::min<std::uint32_t>(cfg.m * (1u << cfg.m) - low, kOperandMax * kOperandMax);
  }
  return 0;
}

std::uint32_t max_x_value(const AxMultConfig& cfg) {
  switch (cfg.kind) {
    case MultKind::Exact: return 0;
    case MultKind::Truncated: return cfg.m > 0 ? 1 : 0;
    default: return std::min(cfg.low_mask(), kOperandMax);
  }
}

}  // namespace axcv
