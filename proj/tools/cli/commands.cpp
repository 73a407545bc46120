#include "commands.hpp"

#include <ostream>

#include "axcv/error.hpp"
#include "axcv/nn/format.hpp"
#include "axcv/nn/inference.hpp"
#include "axcv/systolic.hpp"

namespace axcv::cli {

using nlohmann::json;

namespace {

Report make_report(const ExperimentConfig& cfg, std::vector<std::string> columns) {
  Report r;
  r.command = cfg.command;
  r.config = cfg.to_json();
  r.columns = std::move(columns);
  return r;
}

json optional_number(bool present, double v) { return present ? json(v) : json(nullptr); }

// Conv-error rows are numbered in report order; row i draws its weights from
// stream i of the seed and its activation vectors from seed + 1 + i, so any
// single row can be regenerated alone.
std::uint64_t vector_seed(std::uint64_t seed, std::size_t row) { return seed + 1 + row; }

nn::Dataset limit_dataset(nn::Dataset ds, std::uint64_t n) {
  if (n == 0 || n >= ds.size()) return ds;
  ds.images.resize(n * ds.image_bytes());
  ds.labels.resize(n);
  return ds;
}

struct AccuracyPair {
  nn::EvalResult with_v;
  nn::EvalResult without_v;
  bool fits_paper_width = true;
};

AccuracyPair evaluate_pair(const nn::QuantizedModel& model, const nn::Dataset& ds, const AxMultConfig& mult,
                           ConstantPrecision precision, bool layer_error) {
  AccuracyPair p;
  const nn::InferenceOptions with{mult, true, precision};
  const nn::InferenceOptions without{mult, false, precision};
  const nn::InferenceEngine engine(model, with);
  for (const auto& layer : engine.constants())
    for (const auto& c : layer) p.fits_paper_width &= c.fits_paper_width;
  p.with_v = nn::evaluate(model, ds, with, layer_error);
  p.without_v = nn::evaluate(model, ds, without, layer_error);
  return p;
}

}  // namespace

CommandResult cmd_stats(const ExperimentConfig& cfg) {
  CommandResult res{make_report(cfg, {"kind", "m", "dist", "n", "seed", "mean", "std", "mean_stderr",
                                      "exhaustive_mean", "exhaustive_std"})};
  for (const auto& mult : cfg.grid) {
    for (const auto& dist : cfg.distributions) {
      const ErrorStats s = mult_error_stats(mult, dist, dist, cfg.samples, cfg.seed, cfg.threads);
      const ExactMoments e = exact_error_moments(mult, dist, dist);
      res.report.add_row({to_string(mult.kind), mult.m, dist.describe(), s.n_samples, s.seed, s.mean, s.std,
                          s.mean_stderr(), e.mean, e.std});
    }
  }
  return res;
}

CommandResult cmd_conv_error(const ExperimentConfig& cfg) {
  CommandResult res{make_report(
      cfg, {"kind", "m", "dist", "k", "filter", "n", "vector_seed", "c", "c0", "fits_paper_width", "mean_without_v",
            "var_without_v", "mean_with_v", "var_with_v", "var_stderr_with_v", "mean_rounded", "var_rounded",
            "rounding_mean_bound", "var_closed_form"})};
  std::size_t stream = 0;
  for (const auto& mult : cfg.grid) {
    for (const auto& dist : cfg.distributions) {
      for (std::size_t k : cfg.filter_sizes) {
        for (std::size_t f = 0; f < cfg.filters; ++f, ++stream) {
          Rng rng = make_rng(cfg.seed, stream);
          Filter filter;
          filter.weights.resize(k);
          sample_fill(OperandDistribution::uniform(), rng, filter.weights);
          const std::uint64_t vseed = vector_seed(cfg.seed, stream);
          const ConvErrorStudy st =
              conv_error_study(mult, filter, dist, cfg.samples, vseed, cfg.precision(), cfg.threads);
          const FilterConstants& c = st.constants;
          json closed = nullptr;
          if (mult.kind == MultKind::Perforated) {
            closed = closed_form_var_perforated(filter.weights, c.c_real, mult.m);
          } else if (mult.kind == MultKind::Recursive) {
            closed = closed_form_var_recursive(filter.weights, c.c_real, mult.m);
          } else if (mult.kind == MultKind::Exact) {
            closed = 0.0;
          }
          // The closed forms assume uniform low activation bits.
          if (dist.kind != OperandDistribution::Kind::Uniform || dist.lo != 0 || dist.hi != 255) closed = nullptr;
          res.report.add_row({to_string(mult.kind), mult.m, dist.describe(), k, f, cfg.samples, vseed,
                              c.c.to_double(), c.c0, c.fits_paper_width, st.baseline.mean, st.baseline.variance(),
                              st.unrounded.mean, st.unrounded.variance(), st.unrounded.var_stderr, st.rounded.mean,
                              st.rounded.variance(), rounding_mean_bound(c, k), closed});
        }
      }
    }
  }
  return res;
}

CommandResult cmd_systolic_check(const ExperimentConfig& cfg, std::ostream& diagnostics) {
  CommandResult res{make_report(cfg, {"kind", "m", "n", "tiles", "outputs", "mismatches", "latency_mismatches",
                                      "main_adder_bits", "star_adder_bits", "sumx_adder_bits", "status",
                                      "first_mismatch_tile", "first_mismatch_vector", "first_mismatch_row"})};
  for (const auto& mult : cfg.grid) {
    for (unsigned n : cfg.array_sizes) {
      const auto array = MacArrayConfig::make(n, mult, cfg.plus_latency);
      EquivalenceOptions opt;
      opt.tiles = cfg.samples;
      opt.vectors = cfg.vectors;
      opt.seed = cfg.seed;
      opt.precision = cfg.precision();
      opt.full_tiles = !cfg.random_shapes;
      // Flip the lowest stored bit of the first product so the checker has
      // something to find.
      if (cfg.inject_fault) opt.fault = FaultInjection{0, 0, 0, 0};
      const EquivalenceSummary s = check_equivalence(array, opt);
      json tile = nullptr, vec = nullptr, row = nullptr;
      if (s.first_mismatch) {
        tile = s.first_mismatch->tile;
        vec = s.first_mismatch->vector;
        row = s.first_mismatch->row;
        diagnostics << "mismatch: " << describe(mult) << " N=" << n << " seed=" << cfg.seed
                    << " tile=" << s.first_mismatch->tile << " vector=" << s.first_mismatch->vector
                    << " row=" << s.first_mismatch->row << " expected=" << s.first_mismatch->expected
                    << " actual=" << s.first_mismatch->actual << '\n';
      }
      if (s.latency_mismatches) {
        diagnostics << "latency mismatch: " << describe(mult) << " N=" << n << " seed=" << cfg.seed << " in "
                    << s.latency_mismatches << " tiles\n";
      }
      if (!s.passed()) res.exit_code = kExitEquivalence;
      res.report.add_row({to_string(mult.kind), mult.m, n, s.tiles, s.outputs, s.mismatches, s.latency_mismatches,
                          array.widths.main_adder, array.widths.star_adder, array.widths.sumx_adder,
                          s.passed() ? "pass" : "fail", tile, vec, row});
    }
  }
  return res;
}

CommandResult cmd_infer(const ExperimentConfig& cfg) {
  const nn::QuantizedModel model = nn::load_model(cfg.model);
  const nn::Dataset ds = limit_dataset(nn::load_dataset(cfg.dataset, cfg.labels), cfg.samples);
  const double exact = nn::evaluate(model, ds, {AxMultConfig::exact()}, false).accuracy;

  std::vector<std::string> columns{"kind", "m", "accuracy_with_v", "accuracy_without_v", "loss_with_v",
                                   "loss_without_v", "delta", "fits_paper_width"};
  std::vector<std::string> layer_names;
  for (const auto& layer : model.layers)
    if (nn::is_compute_layer(layer)) layer_names.push_back(nn::layer_name(layer));
  for (const auto& n : layer_names) {
    columns.push_back("mse_with_v_" + n);
    columns.push_back("mse_without_v_" + n);
  }
  CommandResult res{make_report(cfg, columns)};
  json results = json::array();
  for (const auto& mult : cfg.grid) {
    const AccuracyPair p = evaluate_pair(model, ds, mult, cfg.precision(), true);
    const double a = p.with_v.accuracy, b = p.without_v.accuracy;
    std::vector<json> row{to_string(mult.kind), mult.m, a, b, exact - a, exact - b, a - b, p.fits_paper_width};
    json layers = json::array();
    for (std::size_t i = 0; i < p.with_v.per_layer.size(); ++i) {
      const double mw = p.with_v.per_layer[i].mse(), mo = p.without_v.per_layer[i].mse();
      row.push_back(mw);
      row.push_back(mo);
      layers.push_back({{"name", p.with_v.per_layer[i].name}, {"mse_with_v", mw}, {"mse_without_v", mo}});
    }
    res.report.add_row(std::move(row));
    results.push_back({{"kind", to_string(mult.kind)},
                       {"m", mult.m},
                       {"accuracy_with_v", a},
                       {"accuracy_without_v", b},
                       {"layers", layers}});
  }
  res.report.extra["model"] = {{"name", model.name},
                               {"format_version", model.format_version},
                               {"checksum", model.checksum},
                               {"recorded_accuracy", model.reference_accuracy ? json(*model.reference_accuracy)
                                                                             : json(nullptr)}};
  res.report.extra["dataset"] = {{"format_version", nn::kDatasetFormatVersion}, {"images", ds.size()}};
  res.report.extra["exact_accuracy"] = exact;
  res.report.extra["results"] = results;
  return res;
}

CommandResult cmd_sweep(const ExperimentConfig& cfg) {
  std::vector<std::string> columns{"kind", "m", "dist", "exhaustive_mean", "exhaustive_std", "max_error",
                                   "expected_x"};
  const bool with_model = !cfg.model.empty() && !cfg.dataset.empty();
  if (with_model) {
    for (const char* c : {"accuracy_with_v", "accuracy_without_v"}) columns.emplace_back(c);
  }
  CommandResult res{make_report(cfg, columns)};
  std::optional<nn::QuantizedModel> model;
  std::optional<nn::Dataset> ds;
  if (with_model) {
    model = nn::load_model(cfg.model);
    ds = limit_dataset(nn::load_dataset(cfg.dataset, cfg.labels), cfg.samples);
  }
  for (const auto& mult : cfg.grid) {
    std::optional<AccuracyPair> acc;
    if (with_model) acc = evaluate_pair(*model, *ds, mult, cfg.precision(), false);
    for (const auto& dist : cfg.distributions) {
      const ExactMoments e = exact_error_moments(mult, dist, dist);
      const bool has_x = mult.kind != MultKind::Exact;
      std::vector<json> row{to_string(mult.kind), mult.m, dist.describe(), e.mean, e.std, max_mult_error(mult),
                            optional_number(has_x, has_x ? expected_x(mult) : 0.0)};
      if (with_model) {
        row.push_back(acc->with_v.accuracy);
        row.push_back(acc->without_v.accuracy);
      }
      res.report.add_row(std::move(row));
    }
  }
  return res;
}

CommandResult run_command(const ExperimentConfig& cfg, std::ostream& diagnostics) {
  if (cfg.command == "stats") return cmd_stats(cfg);
  if (cfg.command == "conv-error") return cmd_conv_error(cfg);
  if (cfg.command == "systolic-check") return cmd_systolic_check(cfg, diagnostics);
  if (cfg.command == "infer") return cmd_infer(cfg);
  if (cfg.command == "sweep") return cmd_sweep(cfg);
  throw ConfigError("unknown command '" + cfg.command + "'");
}

}  // namespace axcv::cli
