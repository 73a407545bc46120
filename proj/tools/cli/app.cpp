#include "app.hpp"

#include <ostream>

#include "CLI11.hpp"
#include "axcv/error.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "json.hpp"

namespace axcv::cli {

namespace {

// Config files are JSON objects keyed by long flag name without the dashes,
// e.g. {"kind": ["perforated"], "m": [1, 2], "samples": 100000}. CLI11 gives
// flags on the command line precedence over anything loaded here.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& is) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(key, v));
        if (item.inputs.empty()) item.inputs.push_back("");  // explicit empty list
      } else {
        item.inputs.push_back(scalar(key, value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const std::string& key, const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config key '" + key + "' must be a scalar or a list of scalars");
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Approximate multiplier and control-variate simulator"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; command-line flags override its values");
  app.allow_config_extras(false);
  app.require_subcommand(1, 1);

  ExperimentConfig cfg;
  app.add_option("--kind", cfg.kinds, "multiplier families: exact, perforated, recursive, truncated")
      ->delimiter(',');
  app.add_option("--m", cfg.levels, "approximation levels (applied to every --kind)")->delimiter(',');
  app.add_option("--dist", cfg.dists, "operand distributions: uniform[:lo:hi], normal[:mu:sigma]")
      ->delimiter(',');
  app.add_option("--samples", cfg.samples,
                 "samples (stats), activation vectors per filter (conv-error), tiles (systolic-check), "
                 "test images (infer, sweep; 0 = all)");
  app.add_option("--seed", cfg.seed, "RNG seed");
  app.add_option("--array-size", cfg.array_sizes, "array dimensions N")->delimiter(',');
  app.add_option("--model", cfg.model, "model file");
  app.add_option("--dataset", cfg.dataset, "image file of the test set");
  app.add_option("--labels", cfg.labels, "label file (default: dataset path with .lbl)");
  app.add_option("--out", cfg.out, "report path, - for stdout");
  app.add_option("--format", cfg.format, "csv or json");
  app.add_flag("--paper-faithful", cfg.paper_faithful, "round C to the 8-bit MAC+ operand width");
  app.add_option("--threads", cfg.threads, "worker threads");
  app.add_option("--filter-size", cfg.filter_sizes, "conv-error filter lengths k")->delimiter(',');
  app.add_option("--filters", cfg.filters, "conv-error random filters per (kind, m, dist, k)");
  app.add_option("--vectors", cfg.vectors, "systolic-check activation vectors per tile");
  app.add_flag("--random-shapes", cfg.random_shapes, "systolic-check: draw tile shapes in [1, N]");
  app.add_flag("--inject-fault", cfg.inject_fault, "systolic-check: flip one product bit in the first tile");
  app.add_option("--plus-latency", cfg.plus_latency, "systolic-check: MAC+ column latency (1 or 2)");

  for (const char* name : {"stats", "conv-error", "systolic-check", "infer", "sweep"}) {
    app.add_subcommand(name)->fallthrough();
  }
  app.get_subcommand("stats")->description("multiplier error mean and std per (kind, m, dist)");
  app.get_subcommand("conv-error")->description("random-filter convolution error with and without the variate");
  app.get_subcommand("systolic-check")->description("randomised equivalence of the MAC array and corrected_dot");
  app.get_subcommand("infer")->description("fixture accuracy with and without the variate");
  app.get_subcommand("sweep")->description("exhaustive error moments over every level, optional accuracy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  cfg.command = app.get_subcommands().front()->get_name();
  cfg.kinds_given = app.count("--kind") > 0;

  try {
    resolve(cfg);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    CommandResult res = run_command(cfg, err);
    write_output(cfg.out, res.report.render(cfg.format), out);
    if (res.exit_code == kExitEquivalence) err << "equivalence check failed\n";
    return res.exit_code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOther;
  }
}

}  // namespace axcv::cli
