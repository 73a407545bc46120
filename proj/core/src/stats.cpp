#include "axcv/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "axcv/error.hpp"

namespace axcv {

OperandDistribution OperandDistribution::uniform(int lo, int hi) {
  OperandDistribution d;
  d.kind = Kind::Uniform;
  d.lo = lo;
  d.hi = hi;
  validate(d);
  return d;
}

OperandDistribution OperandDistribution::normal(double mu, double sigma) {
  OperandDistribution d;
  d.kind = Kind::Normal;
  d.mu = mu;
  d.sigma = sigma;
  validate(d);
  return d;
}

std::string OperandDistribution::describe() const {
  std::ostringstream os;
  if (kind == Kind::Uniform) {
    os << "uniform(" << lo << "," << hi << ")";
  } else {
    os << "normal(" << mu << "," << sigma << ")";
  }
  return os.str();
}

void validate(const OperandDistribution& dist) {
  if (dist.kind == OperandDistribution::Kind::Uniform) {
    if (dist.lo < 0 || dist.hi > static_cast<int>(kOperandMax) || dist.lo > dist.hi) {
      throw ConfigError("uniform range [" + std::to_string(dist.lo) + "," +
                        std::to_string(dist.hi) + "] must lie within [0,255]");
    }
  } else if (!(dist.sigma > 0.0) || !std::isfinite(dist.mu) || !std::isfinite(dist.sigma)) {
    throw ConfigError("normal distribution needs a finite mean and a positive sigma");
  }
}

OperandDistribution parse_distribution(std::string_view text) {
  std::vector<std::string> parts;
  std::string token;
  std::istringstream in{std::string(text)};
  while (std::getline(in, token, ':')) parts.push_back(token);
  if (parts.empty()) throw ConfigError("empty distribution");

  auto number = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw ConfigError("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad distribution parameter '" + parts[i] + "' in '" +
                        std::string(text) + "'");
    }
  };

  if (parts[0] == "uniform") {
    if (parts.size() == 1) return OperandDistribution::uniform();
    if (parts.size() == 3) {
      return OperandDistribution::uniform(static_cast<int>(number(1)), static_cast<int>(number(2)));
    }
  } else if (parts[0] == "normal") {
    if (parts.size() == 1) return OperandDistribution::normal();
    if (parts.size() == 3) return OperandDistribution::normal(number(1), number(2));
  }
  throw ConfigError("unrecognised distribution '" + std::string(text) +
                    "' (expected uniform[:lo:hi] or normal[:mu:sigma])");
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint8_t clamp_normal(double draw) {
  const double r = std::nearbyint(draw);  // default rounding mode: ties to even
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, static_cast<double>(kOperandMax)));
}

bool full_byte_range(const OperandDistribution& d) {
  return d.kind == OperandDistribution::Kind::Uniform && d.lo == 0 &&
         d.hi == static_cast<int>(kOperandMax);
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (0x6a09e667f3bcc909ULL * (stream + 1));
  std::seed_seq seq{splitmix64(state), splitmix64(state), splitmix64(state), splitmix64(state)};
  return Rng(seq);
}

std::uint8_t sample(const OperandDistribution& dist, Rng& rng) {
  if (dist.kind == OperandDistribution::Kind::Uniform) {
    std::uniform_int_distribution<int> u(dist.lo, dist.hi);
    return static_cast<std::uint8_t>(u(rng));
  }
  std::normal_distribution<double> g(dist.mu, dist.sigma);
  return clamp_normal(g(rng));
}

void sample_fill(const OperandDistribution& dist, Rng& rng, std::span<std::uint8_t> out) {
  if (full_byte_range(dist)) {
    std::size_t i = 0;
    while (i < out.size()) {
      std::uint64_t bits = rng();
      for (int b = 0; b < 8 && i < out.size(); ++b, bits >>= 8) {
        out[i++] = static_cast<std::uint8_t>(bits);
      }
    }
  } else if (dist.kind == OperandDistribution::Kind::Uniform) {
    std::uniform_int_distribution<int> u(dist.lo, dist.hi);
    for (auto& v : out) v = static_cast<std::uint8_t>(u(rng));
  } else {
    std::normal_distribution<double> g(dist.mu, dist.sigma);
    for (auto& v : out) v = clamp_normal(g(rng));
  }
}

double ErrorStats::mean_stderr() const {
  return n_samples > 0 ? std / std::sqrt(static_cast<double>(n_samples)) : 0.0;
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.scale_ != scale_) throw ConfigError("cannot merge accumulators with different scales");
  s1_ += other.s1_;
  s2_ += other.s2_;
  s3_ += other.s3_;
  s4_ += other.s4_;
  n_ += other.n_;
}

ErrorStats MomentAccumulator::finish(std::uint64_t seed) const {
  ErrorStats out;
  out.n_samples = n_;
  out.seed = seed;
  if (n_ == 0) return out;

  const long double scale = static_cast<long double>(scale_);
  const long double n = static_cast<long double>(n_);
  out.mean = static_cast<double>(static_cast<long double>(s1_) / (n * scale));
  if (n_ < 2) return out;

  // n * s2 - s1^2, exact unless it overflows 128 bits.
  long double centered_ss = 0.0L;
  int128_t ns2 = 0, s1sq = 0;
  if (!__builtin_mul_overflow(static_cast<int128_t>(n_), s2_, &ns2) &&
      !__builtin_mul_overflow(s1_, s1_, &s1sq)) {
    centered_ss = static_cast<long double>(ns2 - s1sq) / n;
  } else {
    const long double s1 = static_cast<long double>(s1_);
    centered_ss = static_cast<long double>(s2_) - s1 * (s1 / n);
  }
  const long double var_scaled = std::max(0.0L, centered_ss / (n - 1));
  out.std = static_cast<double>(std::sqrt(var_scaled) / scale);

  if (n_ >= 4) {
    const long double mu = static_cast<long double>(s1_) / n;
    const long double m2 = static_cast<long double>(s2_) / n;
    const long double m3 = s3_ / n;
    const long double m4 = s4_ / n;
    const long double central4 = m4 - 4 * mu * m3 + 6 * mu * mu * m2 - 3 * mu * mu * mu * mu;
    const long double sigma4 = var_scaled * var_scaled;
    const long double v = (central4 - (n - 3) / (n - 1) * sigma4) / n;
    out.var_stderr = static_cast<double>(std::sqrt(std::max(0.0L, v)) / (scale * scale));
  }
  return out;
}

namespace {

// Error of every (w, low activation bits) pair; errors depend on A only
// through its m low bits.
struct ErrorTable {
  unsigned low_bits = 0;
  std::uint32_t low_mask = 0;
  std::vector<std::uint32_t> err;
  std::array<std::uint32_t, 256> x{};

  explicit ErrorTable(const AxMultConfig& cfg) {
    low_bits = std::min(cfg.m, kOperandBits);
    low_mask = (1u << low_bits) - 1u;
    err.resize(std::size_t{256} << low_bits);
    for (std::uint32_t w = 0; w <= kOperandMax; ++w) {
      for (std::uint32_t y = 0; y <= low_mask; ++y) {
        err[(w << low_bits) | y] =
            mult_error(cfg, static_cast<std::uint8_t>(w), static_cast<std::uint8_t>(y));
      }
    }
    for (std::uint32_t a = 0; a <= kOperandMax; ++a) {
      x[a] = cfg.kind == MultKind::Exact ? 0 : x_value(cfg, static_cast<std::uint8_t>(a));
    }
  }

  std::uint32_t lookup(std::uint8_t w, std::uint8_t a) const {
    return err[(std::uint32_t{w} << low_bits) | (a & low_mask)];
  }
};

template <typename ChunkFn>
void run_chunks(std::uint64_t n_chunks, unsigned threads, ChunkFn&& fn) {
  threads = std::max(1u, threads);
  if (threads == 1 || n_chunks <= 1) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::uint64_t c = t; c < n_chunks; c += threads) fn(c);
    });
  }
  for (auto& th : pool) th.join();
}

constexpr std::uint64_t kPairsPerChunk = 1u << 16;
constexpr std::uint64_t kVectorsPerChunk = 1u << 12;

}  // namespace

ErrorStats mult_error_stats(const AxMultConfig& cfg, const OperandDistribution& dist_w,
                            const OperandDistribution& dist_a, std::uint64_t n,
                            std::uint64_t seed, unsigned threads) {
  validate(cfg);
  validate(dist_w);
  validate(dist_a);
  if (n == 0) throw ConfigError("mult_error_stats needs at least one sample");

  const ErrorTable table(cfg);
  const std::uint64_t n_chunks = (n + kPairsPerChunk - 1) / kPairsPerChunk;
  std::vector<MomentAccumulator> partial(n_chunks);

  run_chunks(n_chunks, threads, [&](std::uint64_t c) {
    Rng rng = make_rng(seed, c);
    const std::uint64_t count = std::min(kPairsPerChunk, n - c * kPairsPerChunk);
    std::vector<std::uint8_t> ws(count), as(count);
    sample_fill(dist_w, rng, ws);
    sample_fill(dist_a, rng, as);
    MomentAccumulator acc;
    for (std::uint64_t i = 0; i < count; ++i) acc.add(table.lookup(ws[i], as[i]));
    partial[c] = acc;
  });

  MomentAccumulator total;
  for (const auto& p : partial) total.merge(p);
  return total.finish(seed);
}

ConvErrorStudy conv_error_study(const AxMultConfig& cfg, const Filter& filter,
                                const OperandDistribution& dist_a, std::uint64_t n_vectors,
                                std::uint64_t seed, ConstantPrecision rounded_precision,
                                unsigned threads) {
  validate(dist_a);
  if (n_vectors == 0) throw ConfigError("conv_error_study needs at least one vector");

  ConvErrorStudy study;
  study.constants = derive_constants(cfg, filter, rounded_precision);
  const FilterConstants& consts = study.constants;
  const ErrorTable table(cfg);

  const std::size_t k = filter.size();
  std::vector<std::uint32_t> row_base(k);
  for (std::size_t j = 0; j < k; ++j) row_base[j] = std::uint32_t{filter.weights[j]} << table.low_bits;

  // eps_G* * den = eps * den - c_num * (den / c_den) * sum_x - c0_num * (den / c0_den)
  const std::int64_t den = std::lcm(consts.c_exact.den, consts.c0_exact.den);
  const std::int64_t c_scaled = consts.c_exact.num * (den / consts.c_exact.den);
  const std::int64_t c0_scaled = consts.c0_exact.num * (den / consts.c0_exact.den);

  const std::uint64_t n_chunks = (n_vectors + kVectorsPerChunk - 1) / kVectorsPerChunk;
  struct Partial {
    MomentAccumulator baseline{1}, unrounded{1}, rounded{1};
  };
  std::vector<Partial> partial(n_chunks, Partial{MomentAccumulator(1), MomentAccumulator(den),
                                                 MomentAccumulator(1)});

  run_chunks(n_chunks, threads, [&](std::uint64_t c) {
    Rng rng = make_rng(seed, c);
    const std::uint64_t count = std::min(kVectorsPerChunk, n_vectors - c * kVectorsPerChunk);
    std::vector<std::uint8_t> acts(k);
    Partial& p = partial[c];
    for (std::uint64_t v = 0; v < count; ++v) {
      sample_fill(dist_a, rng, acts);
      std::int64_t eps = 0;
      std::uint64_t sx = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const std::uint8_t a = acts[j];
        eps += table.err[row_base[j] | (a & table.low_mask)];
        sx += table.x[a];
      }
      p.baseline.add(eps);
      p.unrounded.add(eps * den - c_scaled * static_cast<std::int64_t>(sx) - c0_scaled);
      p.rounded.add(eps - variate_term(consts, sx) - consts.c0);
    }
  });

  MomentAccumulator baseline(1), unrounded(den), rounded(1);
  for (const auto& p : partial) {
    baseline.merge(p.baseline);
    unrounded.merge(p.unrounded);
    rounded.merge(p.rounded);
  }
  study.baseline = baseline.finish(seed);
  study.unrounded = unrounded.finish(seed);
  study.rounded = rounded.finish(seed);
  return study;
}

ErrorStats conv_error_stats(const AxMultConfig& cfg, const Filter& filter,
                            const OperandDistribution& dist_a, std::uint64_t n_vectors,
                            std::uint64_t seed, bool with_variate, ConstantPrecision precision) {
  if (n_vectors < 2) throw ConfigError("conv_error_stats needs at least two vectors");
  const ConvErrorStudy study = conv_error_study(cfg, filter, dist_a, n_vectors, seed, precision);
  if (!with_variate) return study.baseline;
  return precision == ConstantPrecision::Exact ? study.unrounded : study.rounded;
}

namespace {

double uniform_low_bits_variance(unsigned m) {
  const double levels = std::ldexp(1.0, static_cast<int>(m));
  return (levels - 1.0) * (levels + 1.0) / 12.0;
}

}  // namespace

double closed_form_var_perforated(std::span<const std::uint8_t> weights, double c, unsigned m) {
  if (m < 1) throw ConfigError("closed-form variance needs m >= 1");
  double ss = 0.0;
  for (auto w : weights) ss += (w - c) * (w - c);
  return uniform_low_bits_variance(m) * ss;
}

double closed_form_var_recursive(std::span<const std::uint8_t> weights, double c, unsigned m) {
  if (m < 1) throw ConfigError("closed-form variance needs m >= 1");
  const unsigned mask = (1u << m) - 1u;
  double ss = 0.0;
  for (auto w : weights) {
    const double low = static_cast<double>(w & mask);
    ss += (low - c) * (low - c);
  }
  return uniform_low_bits_variance(m) * ss;
}

double expected_x(const AxMultConfig& cfg) {
  const double levels = std::ldexp(1.0, static_cast<int>(cfg.m));
  switch (cfg.kind) {
    case MultKind::Exact:
      throw ConfigError("the exact multiplier has no control-variate input");
    case MultKind::Perforated:
    case MultKind::Recursive: return (levels - 1.0) / 2.0;
    case MultKind::Truncated: return (levels - 1.0) / levels;
  }
  return 0.0;
}

double rounding_mean_bound(const FilterConstants& consts, std::size_t k) {
  if (consts.mult.kind == MultKind::Exact) return 0.0;
  const double ulp = consts.format.exact ? 0.0 : std::ldexp(1.0, -static_cast<int>(consts.format.frac_bits));
  double bound = expected_x(consts.mult) * static_cast<double>(k) * ulp / 2.0 + 0.5;
  if (consts.c0_exact.num != 0) bound += 0.5;
  return bound;
}

namespace {

std::array<double, 256> probability_mass(const OperandDistribution& d) {
  std::array<double, 256> p{};
  if (d.kind == OperandDistribution::Kind::Uniform) {
    const double each = 1.0 / (d.hi - d.lo + 1);
    for (int v = d.lo; v <= d.hi; ++v) p[v] = each;
    return p;
  }
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - d.mu) / (d.sigma * std::sqrt(2.0))); };
  for (int v = 0; v <= 255; ++v) {
    const double lo = v == 0 ? 0.0 : cdf(v - 0.5);
    const double hi = v == 255 ? 1.0 : cdf(v + 0.5);
    p[v] = hi - lo;
  }
  return p;
}

}  // namespace

ExactMoments exact_error_moments(const AxMultConfig& cfg, const OperandDistribution& dist_w,
                                 const OperandDistribution& dist_a) {
  validate(cfg);
  const auto pw = probability_mass(dist_w);
  const auto pa = probability_mass(dist_a);
  long double m1 = 0, m2 = 0;
  for (int w = 0; w < 256; ++w) {
    if (pw[w] == 0.0) continue;
    for (int a = 0; a < 256; ++a) {
      const long double e = mult_error(cfg, static_cast<std::uint8_t>(w), static_cast<std::uint8_t>(a));
      const long double p = static_cast<long double>(pw[w]) * pa[a];
      m1 += p * e;
      m2 += p * e * e;
    }
  }
  return {static_cast<double>(m1), static_cast<double>(std::sqrt(std::max(0.0L, m2 - m1 * m1)))};
}

}  // namespace axcv
