#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "axcv/error.hpp"
#include "axcv/stats.hpp"
#include "oracles.hpp"

using namespace axcv;

namespace {

AxMultConfig perf(unsigned m) { return AxMultConfig::make(MultKind::Perforated, m); }

double draw_mean(const OperandDistribution& d, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<std::uint8_t> buf(n);
  sample_fill(d, rng, buf);
  double s = 0;
  for (auto b : buf) s += b;
  return s / static_cast<double>(n);
}

}  // namespace

TEST(Sampling, UniformMean) {
  EXPECT_NEAR(draw_mean(OperandDistribution::uniform(), 1'000'000, 1), 127.5, 0.3);
}

TEST(Sampling, NormalMean) {
  EXPECT_NEAR(draw_mean(OperandDistribution::normal(125, 24), 1'000'000, 2), 125.0, 0.1);
}

TEST(Sampling, DegenerateUniform) {
  Rng rng = make_rng(3);
  const auto d = OperandDistribution::uniform(7, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(sample(d, rng), 7);
}

TEST(Sampling, UniformSubrangeCoversEndpoints) {
  Rng rng = make_rng(4);
  const auto d = OperandDistribution::uniform(10, 13);
  std::array<int, 256> seen{};
  for (int i = 0; i < 10000; ++i) ++seen[sample(d, rng)];
  for (int v = 0; v < 256; ++v) {
    if (v >= 10 && v <= 13) EXPECT_GT(seen[v], 2000);
    else EXPECT_EQ(seen[v], 0);
  }
}

TEST(Sampling, NormalClampsToByteRange) {
  Rng rng = make_rng(5);
  const auto d = OperandDistribution::normal(250, 40);
  int at_top = 0;
  for (int i = 0; i < 10000; ++i) at_top += sample(d, rng) == 255;
  EXPECT_GT(at_top, 3000);  // P(X >= 254.5) is about 0.45
}

TEST(Sampling, ParseAndValidate) {
  EXPECT_EQ(parse_distribution("uniform").hi, 255);
  const auto u = parse_distribution("uniform:3:9");
  EXPECT_EQ(u.lo, 3);
  EXPECT_EQ(u.hi, 9);
  const auto n = parse_distribution("normal:100:10");
  EXPECT_EQ(n.kind, OperandDistribution::Kind::Normal);
  EXPECT_DOUBLE_EQ(n.mu, 100);
  EXPECT_DOUBLE_EQ(parse_distribution("normal").sigma, 24);
  EXPECT_THROW(parse_distribution("uniform:9:3"), ConfigError);
  EXPECT_THROW(parse_distribution("uniform:0:256"), ConfigError);
  EXPECT_THROW(parse_distribution("normal:100:-1"), ConfigError);
  EXPECT_THROW(parse_distribution("cauchy"), ConfigError);
  EXPECT_THROW(parse_distribution("uniform:x:3"), ConfigError);
}

TEST(Moments, MatchTwoPassComputation) {
  std::mt19937_64 rng(9);
  std::vector<double> xs;
  MomentAccumulator acc(4);
  for (int i = 0; i < 5000; ++i) {
    const std::int64_t v = static_cast<std::int64_t>(rng() % 100000) - 30000;
    acc.add(v);
    xs.push_back(static_cast<double>(v) / 4.0);
  }
  const ErrorStats s = acc.finish(0);
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  EXPECT_NEAR(s.mean, mean, 1e-9 * std::abs(mean) + 1e-12);
  EXPECT_NEAR(s.variance(), oracle::sample_variance(xs), 1e-9 * s.variance());
}

TEST(Moments, MergeOrderIndependent) {
  std::mt19937_64 rng(10);
  std::vector<MomentAccumulator> parts(7);
  MomentAccumulator whole;
  for (int i = 0; i < 7000; ++i) {
    const auto v = static_cast<std::int64_t>(rng() % 1000003);
    parts[static_cast<std::size_t>(i) % 7].add(v);
    whole.add(v);
  }
  MomentAccumulator fwd, rev;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    fwd.merge(parts[i]);
    rev.merge(parts[parts.size() - 1 - i]);
  }
  EXPECT_EQ(fwd.finish(1).mean, whole.finish(1).mean);
  EXPECT_EQ(fwd.finish(1).std, rev.finish(1).std);
  EXPECT_EQ(fwd.finish(1).std, whole.finish(1).std);
}

TEST(MultErrorStats, DeterministicAndThreadIndependent) {
  const auto cfg = AxMultConfig::make(MultKind::Truncated, 5);
  const auto u = OperandDistribution::uniform();
  const ErrorStats a = mult_error_stats(cfg, u, u, 300'000, 42, 1);
  const ErrorStats b = mult_error_stats(cfg, u, u, 300'000, 42, 3);
  const ErrorStats c = mult_error_stats(cfg, u, u, 300'000, 43, 1);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
  EXPECT_NE(a.mean, c.mean);
  EXPECT_EQ(a.n_samples, 300'000u);
  EXPECT_EQ(a.seed, 42u);
}

TEST(MultErrorStats, ExactConfigIsZero) {
  const auto u = OperandDistribution::uniform();
  const ErrorStats s = mult_error_stats(AxMultConfig::exact(), u, u, 1000, 1);
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_THROW(mult_error_stats(perf(1), u, u, 0, 1), ConfigError);
}

// Monte-Carlo estimates agree with exhaustive enumeration of the operand PMFs.
TEST(MultErrorStats, AgreesWithExhaustiveMoments) {
  const auto u = OperandDistribution::uniform();
  const auto nd = OperandDistribution::normal();
  for (const auto& kl : oracle::criterion_grid()) {
    const auto cfg = AxMultConfig::make(kl.kind, kl.m);
    for (const auto& d : {u, nd}) {
      const ExactMoments ex = exact_error_moments(cfg, d, d);
      const ErrorStats mc = mult_error_stats(cfg, d, d, 200'000, 77);
      EXPECT_NEAR(mc.mean, ex.mean, 4 * mc.mean_stderr() + 1e-9) << describe(cfg) << " " << d.describe();
      EXPECT_NEAR(mc.variance(), ex.std * ex.std, 4 * mc.var_stderr + 1e-9) << describe(cfg) << " " << d.describe();
    }
  }
}

// Uniform exhaustive moments from first principles for Perforated:
// err = W * L with W uniform on [0,255] and L uniform on [0, 2^m - 1].
TEST(ExactMoments, PerforatedUniformClosedForm) {
  const auto u = OperandDistribution::uniform();
  for (unsigned m = 1; m < 8; ++m) {
    const double ew = 127.5, ew2 = (255.0 * 511.0) / 6.0;
    const double L = std::ldexp(1.0, static_cast<int>(m)) - 1;
    const double el = L / 2, el2 = L * (2 * L + 1) / 6;
    const ExactMoments ex = exact_error_moments(perf(m), u, u);
    EXPECT_NEAR(ex.mean, ew * el, 1e-9);
    EXPECT_NEAR(ex.std * ex.std, ew2 * el2 - ew * ew * el * el, 1e-6);
  }
}

TEST(ClosedForm, PerforatedExamples) {
  const std::vector<std::uint8_t> same(10, 42);
  EXPECT_DOUBLE_EQ(closed_form_var_perforated(same, 42.0, 3), 0.0);
  const std::vector<std::uint8_t> w{0, 2};
  EXPECT_DOUBLE_EQ(closed_form_var_perforated(w, 1.0, 1), 0.5);
  EXPECT_THROW(closed_form_var_perforated(w, 1.0, 0), ConfigError);
}

// Cross-check of the m=1, W=[0,2], C=1 example by enumerating both activation LSBs.
TEST(ClosedForm, PerforatedExampleByEnumeration) {
  const Filter f{{0, 2}, 0};
  FilterConstants c = derive_constants(perf(1), f, ConstantPrecision::Exact);
  ASSERT_EQ(c.c_exact, (Rational{1, 1}));
  std::vector<double> errs;
  for (unsigned a0 = 0; a0 < 2; ++a0)
    for (unsigned a1 = 0; a1 < 2; ++a1) {
      const std::uint8_t a[] = {static_cast<std::uint8_t>(a0), static_cast<std::uint8_t>(a1)};
      errs.push_back(analytic_conv_error(c, f, a).to_double());
    }
  double mean = 0, var = 0;
  for (double e : errs) mean += e / 4;
  for (double e : errs) var += (e - mean) * (e - mean) / 4;  // population variance
  EXPECT_DOUBLE_EQ(mean, 0.0);
  EXPECT_DOUBLE_EQ(var, 0.5);
}

TEST(ExpectedX, Values) {
  EXPECT_DOUBLE_EQ(expected_x(perf(3)), 3.5);
  EXPECT_DOUBLE_EQ(expected_x(AxMultConfig::make(MultKind::Truncated, 1)), 0.5);
  EXPECT_DOUBLE_EQ(expected_x(perf(0)), 0.0);
  EXPECT_DOUBLE_EQ(expected_x(AxMultConfig::make(MultKind::Truncated, 0)), 0.0);
  EXPECT_THROW(expected_x(AxMultConfig::exact()), ConfigError);
}

TEST(ExpectedX, EmpiricalMatchesUnderUniformActivations) {
  const auto u = OperandDistribution::uniform();
  for (const auto& kl : oracle::criterion_grid()) {
    const auto cfg = AxMultConfig::make(kl.kind, kl.m);
    Rng rng = make_rng(123, kl.m);
    MomentAccumulator acc;
    for (int i = 0; i < 200'000; ++i) acc.add(x_value(cfg, sample(u, rng)));
    const ErrorStats s = acc.finish(123);
    EXPECT_NEAR(s.mean, expected_x(cfg), 4 * s.mean_stderr()) << describe(cfg);
  }
}

TEST(ConvErrorStats, ExactConfigIsZero) {
  std::mt19937_64 rng(1);
  const Filter f{oracle::random_bytes(rng, 9), 0};
  const ErrorStats s = conv_error_stats(AxMultConfig::exact(), f, OperandDistribution::uniform(), 1000, 1, true);
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_THROW(conv_error_stats(perf(1), f, OperandDistribution::uniform(), 1, 1, true), ConfigError);
}

// Without the variate, E[eps_G] = k * mu_AM where mu_AM is taken under the
// filter's own weight distribution: for a fixed filter that is the mean over
// its weights of E_A[err(W_j, A)].
TEST(ConvErrorStats, BaselineMeanIsKTimesMuAM) {
  std::mt19937_64 rng(21);
  const auto u = OperandDistribution::uniform();
  for (const auto& kl : oracle::criterion_grid()) {
    const auto cfg = AxMultConfig::make(kl.kind, kl.m);
    const Filter f{oracle::random_bytes(rng, 64), 0};
    double expected = 0;
    for (auto w : f.weights) {
      double e = 0;
      for (unsigned a = 0; a < 256; ++a) e += mult_error(cfg, w, static_cast<std::uint8_t>(a));
      expected += e / 256;
    }
    const ErrorStats s = conv_error_stats(cfg, f, u, 20'000, 5, false);
    EXPECT_NEAR(s.mean, expected, 4 * s.mean_stderr()) << describe(cfg);
  }
}

TEST(ConvErrorStats, WithVariateMeanNearZero) {
  std::mt19937_64 rng(22);
  const auto u = OperandDistribution::uniform();
  for (unsigned m = 1; m <= 3; ++m) {
    const Filter f{oracle::random_bytes(rng, 64), 0};
    const ErrorStats s = conv_error_stats(perf(m), f, u, 20'000, 6, true, ConstantPrecision::Exact);
    EXPECT_LE(std::abs(s.mean), 4 * s.mean_stderr()) << m;
  }
}

TEST(ConvErrorStudy, ThreeErrorsOnOneSample) {
  std::mt19937_64 rng(23);
  const auto u = OperandDistribution::uniform();
  const auto cfg = AxMultConfig::make(MultKind::Truncated, 5);
  const Filter f{oracle::random_bytes(rng, 64), 17};
  const ConvErrorStudy a = conv_error_study(cfg, f, u, 10'000, 99, ConstantPrecision::Fixed8, 1);
  const ConvErrorStudy b = conv_error_study(cfg, f, u, 10'000, 99, ConstantPrecision::Fixed8, 2);
  EXPECT_EQ(a.unrounded.mean, b.unrounded.mean);
  EXPECT_EQ(a.rounded.std, b.rounded.std);
  EXPECT_LT(a.unrounded.variance(), a.baseline.variance());
  EXPECT_NEAR(a.rounded.mean, a.unrounded.mean, rounding_mean_bound(a.constants, 64));
  // conv_error_stats selects the matching column of the same study.
  EXPECT_EQ(conv_error_stats(cfg, f, u, 10'000, 99, false).mean, a.baseline.mean);
  EXPECT_EQ(conv_error_stats(cfg, f, u, 10'000, 99, true, ConstantPrecision::Exact).mean, a.unrounded.mean);
  EXPECT_EQ(conv_error_stats(cfg, f, u, 10'000, 99, true, ConstantPrecision::Fixed8).mean, a.rounded.mean);
}

// Perforated closed-form variance against Monte Carlo for a few filters.
TEST(ConvErrorStats, PerforatedClosedFormVariance) {
  std::mt19937_64 rng(24);
  const auto u = OperandDistribution::uniform();
  for (unsigned m = 1; m <= 3; ++m) {
    for (int t = 0; t < 3; ++t) {
      const Filter f{oracle::random_bytes(rng, 9 + 20 * static_cast<std::size_t>(t)), 0};
      const auto consts = derive_constants(perf(m), f, ConstantPrecision::Exact);
      const ErrorStats s = conv_error_stats(perf(m), f, u, 40'000, 8 + static_cast<std::uint64_t>(t), true);
      const double cf = closed_form_var_perforated(f.weights, consts.c_real, m);
      EXPECT_NEAR(s.variance(), cf, 4 * s.var_stderr) << "m=" << m << " t=" << t;
    }
  }
}

TEST(RoundingBound, Values) {
  const Filter f{std::vector<std::uint8_t>(10, 3), 0};
  const auto narrow = derive_constants(perf(2), f, ConstantPrecision::PaperWidth);
  EXPECT_DOUBLE_EQ(rounding_mean_bound(narrow, 10), 1.5 * 10 * 0.5 + 0.5);
  const auto exact = derive_constants(perf(2), f, ConstantPrecision::Exact);
  EXPECT_DOUBLE_EQ(rounding_mean_bound(exact, 10), 0.5);
}
