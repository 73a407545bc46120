#include "config.hpp"

#include <algorithm>
#include <filesystem>

#include "axcv/error.hpp"

namespace axcv::cli {

namespace {

const std::vector<std::string> kCommands{"stats", "conv-error", "systolic-check", "infer", "sweep"};

bool uses_distributions(const std::string& cmd) {
  return cmd == "stats" || cmd == "conv-error" || cmd == "sweep";
}

std::vector<unsigned> all_levels(MultKind kind) {
  std::vector<unsigned> out;
  for (unsigned m = 0; m < level_limit(kind); ++m) out.push_back(m);
  return out;
}

}  // namespace

std::vector<unsigned> default_levels(MultKind kind) {
  switch (kind) {
    case MultKind::Exact: return {0};
    case MultKind::Perforated: return {1, 2, 3};
    case MultKind::Recursive: return {2, 3, 4, 5};
    case MultKind::Truncated: return {4, 5, 6, 7};
  }
  return {};
}

void resolve(ExperimentConfig& cfg) {
  if (std::find(kCommands.begin(), kCommands.end(), cfg.command) == kCommands.end())
    throw ConfigError("unknown command '" + cfg.command + "'");

  std::vector<MultKind> kinds;
  for (const auto& k : cfg.kinds) {
    if (!k.empty()) kinds.push_back(parse_mult_kind(k));
  }
  if (cfg.kinds_given && kinds.empty()) throw ConfigError("empty multiplier grid");
  if (!cfg.kinds_given && !cfg.levels.empty()) throw ConfigError("--m needs --kind");
  const bool sweep = cfg.command == "sweep";
  if (kinds.empty()) kinds = {MultKind::Perforated, MultKind::Recursive, MultKind::Truncated};

  cfg.grid.clear();
  for (MultKind k : kinds) {
    std::vector<unsigned> levels = cfg.levels;
    if (levels.empty()) levels = sweep ? all_levels(k) : default_levels(k);
    for (unsigned m : levels) {
      if (k == MultKind::Exact && m != 0) continue;  // exact only has level 0
      cfg.grid.push_back(AxMultConfig::make(k, m));
    }
  }
  if (cfg.grid.empty()) throw ConfigError("empty multiplier grid");

  if (cfg.format.empty()) cfg.format = cfg.command == "infer" ? "json" : "csv";
  if (cfg.format != "csv" && cfg.format != "json") throw ConfigError("--format must be csv or json");

  if (uses_distributions(cfg.command) && cfg.dists.empty()) {
    cfg.dists = cfg.command == "conv-error" ? std::vector<std::string>{"uniform"}
                                            : std::vector<std::string>{"uniform", "normal"};
  }
  cfg.distributions.clear();
  for (const auto& d : cfg.dists) cfg.distributions.push_back(parse_distribution(d));

  if (cfg.samples == 0) {
    if (cfg.command == "stats") cfg.samples = 1'000'000;
    if (cfg.command == "conv-error") cfg.samples = 10'000;
    if (cfg.command == "systolic-check") cfg.samples = 200;
  }
  if (cfg.command == "conv-error") {
    if (cfg.filter_sizes.empty()) cfg.filter_sizes = {9, 64, 576};
    if (cfg.filters == 0) cfg.filters = 10;
    for (auto k : cfg.filter_sizes)
      if (k == 0) throw ConfigError("filter size must be positive");
  }
  if (cfg.command == "systolic-check") {
    if (cfg.array_sizes.empty()) cfg.array_sizes = {16, 32, 48, 64};
    for (auto n : cfg.array_sizes)
      if (n == 0) throw ConfigError("array size must be positive");
    if (cfg.vectors == 0) throw ConfigError("--vectors must be positive");
    if (cfg.plus_latency != 1 && cfg.plus_latency != 2) throw ConfigError("--plus-latency must be 1 or 2");
  }
  if (cfg.command == "infer") {
    if (cfg.model.empty()) throw ConfigError("infer needs --model");
    if (cfg.dataset.empty()) throw ConfigError("infer needs --dataset");
  }
  if (!cfg.dataset.empty() && cfg.labels.empty()) {
    cfg.labels = std::filesystem::path(cfg.dataset).replace_extension(".lbl").string();
  }
  if (cfg.threads == 0) throw ConfigError("--threads must be positive");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json grid_json = nlohmann::json::array();
  for (const auto& g : grid) grid_json.push_back({{"kind", to_string(g.kind)}, {"m", g.m}});
  nlohmann::json dist_json = nlohmann::json::array();
  for (const auto& d : distributions) dist_json.push_back(d.describe());
  nlohmann::json j{
      {"command", command},
      {"grid", grid_json},
      {"dist", dist_json},
      {"samples", samples},
      {"seed", seed},
      {"rng", std::string(kRngAlgorithm)},
      {"format", format},
      {"paper_faithful", paper_faithful},
      {"constant_precision", to_string(precision())},
      {"threads", threads},
  };
  if (command == "conv-error") {
    j["filter_sizes"] = filter_sizes;
    j["filters"] = filters;
  }
  if (command == "systolic-check") {
    j["array_size"] = array_sizes;
    j["vectors"] = vectors;
    j["random_shapes"] = random_shapes;
    j["inject_fault"] = inject_fault;
    j["plus_latency"] = plus_latency;
  }
  if (!model.empty()) j["model"] = model;
  if (!dataset.empty()) {
    j["dataset"] = dataset;
    j["labels"] = labels;
  }
  return j;
}

}  // namespace axcv::cli
