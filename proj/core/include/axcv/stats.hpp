#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "axcv/axmult.hpp"
#include "axcv/covar.hpp"
#include "axcv/rounding.hpp"

namespace axcv {

struct OperandDistribution {
  enum class Kind : std::uint8_t { Uniform, Normal };

  Kind kind = Kind::Uniform;
  int lo = 0;
  int hi = static_cast<int>(kOperandMax);
  double mu = 0.0;
  double sigma = 0.0;

  static OperandDistribution uniform(int lo = 0, int hi = static_cast<int>(kOperandMax));
  static OperandDistribution normal(double mu = 125.0, double sigma = 24.0);

  std::string describe() const;
};

/// "uniform", "uniform:lo:hi", "normal", "normal:mu:sigma".
OperandDistribution parse_distribution(std::string_view text);
void validate(const OperandDistribution& dist);

/// Every report records this name next to the seed.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64";
using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); streams are what parallel runs
/// split work across.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Uniform: equiprobable integers in [lo, hi]. Normal: Gaussian draw rounded
/// half-to-even and clamped to [0, 255].
std::uint8_t sample(const OperandDistribution& dist, Rng& rng);
void sample_fill(const OperandDistribution& dist, Rng& rng, std::span<std::uint8_t> out);

struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
  /// Standard error of the sample variance (from the fourth central moment).
  double var_stderr = 0.0;

  double variance() const { return std * std; }
  double mean_stderr() const;
};

/// Accumulates samples given as integers in units of 1/scale. First and second
/// power sums are exact, so merging partial accumulators in any order gives
/// bit-identical mean and std.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::int64_t scale = 1) : scale_(scale) {}

  void add(std::int64_t scaled_value) {
    const auto v = static_cast<int128_t>(scaled_value);
    s1_ += v;
    s2_ += v * v;
    const auto lv = static_cast<long double>(scaled_value);
    s3_ += lv * lv * lv;
    s4_ += lv * lv * lv * lv;
    ++n_;
  }

  void merge(const MomentAccumulator& other);

  std::uint64_t count() const { return n_; }
  ErrorStats finish(std::uint64_t seed) const;

 private:
  std::int64_t scale_;
  int128_t s1_ = 0;
  int128_t s2_ = 0;
  long double s3_ = 0.0L;
  long double s4_ = 0.0L;
  std::uint64_t n_ = 0;
};

/// Sample mean/std of mult_error over n i.i.d. (W, A) pairs. Work is split into
/// fixed-size chunks with one RNG stream each, so the result does not depend
/// on `threads`.
ErrorStats mult_error_stats(const AxMultConfig& cfg, const OperandDistribution& dist_w,
                            const OperandDistribution& dist_a, std::uint64_t n,
                            std::uint64_t seed, unsigned threads = 1);

/// One pass over n_vectors activation vectors, measuring three errors on the
/// same sample: without the variate, with unrounded constants, and through the
/// integer datapath with constants at `rounded_precision`.
struct ConvErrorStudy {
  ErrorStats baseline;
  ErrorStats unrounded;
  ErrorStats rounded;
  FilterConstants constants;
};

ConvErrorStudy conv_error_study(const AxMultConfig& cfg, const Filter& filter,
                                const OperandDistribution& dist_a, std::uint64_t n_vectors,
                                std::uint64_t seed,
                                ConstantPrecision rounded_precision = ConstantPrecision::Fixed8,
                                unsigned threads = 1);

/// eps_G (with_variate = false) or eps_G* (true). precision Exact evaluates
/// the unrounded analytic variate; other precisions use the integer datapath.
ErrorStats conv_error_stats(const AxMultConfig& cfg, const Filter& filter,
                            const OperandDistribution& dist_a, std::uint64_t n_vectors,
                            std::uint64_t seed, bool with_variate,
                            ConstantPrecision precision = ConstantPrecision::Exact);

/// ((2^m - 1)(2^m + 1) / 12) * sum_j (W_j - C)^2.
double closed_form_var_perforated(std::span<const std::uint8_t> weights, double c, unsigned m);

/// Same expression over the low weight bits W_j mod 2^m.
double closed_form_var_recursive(std::span<const std::uint8_t> weights, double c, unsigned m);

/// E[x] under uniformly distributed low activation bits.
double expected_x(const AxMultConfig& cfg);

/// Bound on |E[eps_G*]| caused by representing C, V and C0 as rounded values:
/// E[x] * k * ulp(C) / 2 + 1/2, plus 1/2 when C0 is nonzero.
double rounding_mean_bound(const FilterConstants& consts, std::size_t k);

/// Closed-form mean and std of mult_error under exhaustive enumeration with
/// the given operand probability mass functions.
struct ExactMoments {
  double mean = 0.0;
  double std = 0.0;
};
ExactMoments exact_error_moments(const AxMultConfig& cfg, const OperandDistribution& dist_w,
                                 const OperandDistribution& dist_a);

}  // namespace axcv
