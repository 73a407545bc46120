#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "axcv/axmult.hpp"
#include "axcv/covar.hpp"
#include "axcv/stats.hpp"
#include "json.hpp"

namespace axcv::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitEquivalence = 4,
};

inline constexpr int kReportSchemaVersion = 1;

/// Everything a subcommand needs, after CLI flags, the config file and
/// defaults have been merged. Validation happens in resolve(), before any
/// computation starts.
struct ExperimentConfig {
  std::string command;

  std::vector<std::string> kinds;   // empty: command's default grid
  std::vector<unsigned> levels;     // empty: default levels for each kind
  bool kinds_given = false;
  std::vector<std::string> dists;   // empty: command default
  std::uint64_t samples = 0;        // 0: command default
  std::uint64_t seed = 1;
  std::vector<unsigned> array_sizes;
  std::string model;
  std::string dataset;
  std::string labels;               // default: dataset path with .lbl
  std::string out = "-";
  std::string format;               // csv | json; empty: command default
  bool paper_faithful = false;
  unsigned threads = 1;

  // conv-error
  std::vector<std::size_t> filter_sizes;
  std::size_t filters = 0;

  // systolic-check
  std::size_t vectors = 2;
  bool random_shapes = false;
  bool inject_fault = false;
  unsigned plus_latency = 1;

  // Resolved by resolve().
  std::vector<AxMultConfig> grid;
  std::vector<OperandDistribution> distributions;

  ConstantPrecision precision() const {
    return paper_faithful ? ConstantPrecision::PaperWidth : ConstantPrecision::Fixed8;
  }

  nlohmann::json to_json() const;
};

/// Fills command defaults and builds the multiplier grid. Throws ConfigError.
void resolve(ExperimentConfig& cfg);

/// Levels shown by default for each family: the commonly studied range.
std::vector<unsigned> default_levels(MultKind kind);

}  // namespace axcv::cli
