#include "axcv/systolic.hpp"

#include <algorithm>
#include <ostream>
#include <string>

#include "axcv/error.hpp"
#include "axcv/rounding.hpp"
#include "axcv/stats.hpp"

namespace axcv {

namespace {

constexpr std::uint64_t kProductMax = (std::uint64_t{1} << (2 * kOperandBits)) - 1;

std::uint64_t width_max(unsigned bits) {
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

[[noreturn]] void width_fault(const char* what, std::uint64_t value, unsigned bits,
                              unsigned column) {
  throw SimulatorFault(std::string(what) + " value " + std::to_string(value) + " at column " +
                       std::to_string(column) + " exceeds its " + std::to_string(bits) +
                       "-bit adder");
}

bool approximate(const MacArrayConfig& cfg) { return cfg.mult.kind != MultKind::Exact; }

RowState step(const MacArrayConfig& cfg, std::uint8_t w, std::uint8_t a, const RowState& state,
              std::uint32_t fault_mask) {
  if (state.h >= cfg.n) {
    throw ShapeError("row state column " + std::to_string(state.h) + " is outside the " +
                     std::to_string(cfg.n) + "-column array");
  }
  const AxMultConfig& mult = cfg.mult;
  const std::uint32_t reduced =
      dispatch_kind(mult.kind, [&]<MultKind K>() {
        return kernel::product<K>(w, a, mult.m) >> mult.shift();
      }) ^ fault_mask;

  RowState next = state;
  next.sum += reduced;
  if (next.sum > width_max(cfg.widths.star_adder)) {
    width_fault("partial sum", next.sum, cfg.widths.star_adder, state.h);
  }
  if (approximate(cfg)) {
    next.sum_x += dispatch_kind(mult.kind, [&]<MultKind K>() { return kernel::x_input<K>(a, mult.m); });
    if (next.sum_x > width_max(cfg.widths.sumx_adder)) {
      width_fault("sumX", next.sum_x, cfg.widths.sumx_adder, state.h);
    }
  }
  next.h = state.h + 1;
  return next;
}

std::int64_t finalize(const MacArrayConfig& cfg, const FilterConstants& consts, std::uint64_t sum_n,
                      std::uint64_t sum_x_n, std::uint32_t bias_low, unsigned output_width) {
  const unsigned m = cfg.mult.shift();
  if (bias_low >= (1u << m) && !(m == 0 && bias_low == 0)) {
    throw ShapeError("bias low part " + std::to_string(bias_low) + " does not fit in " +
                     std::to_string(m) + " bits");
  }
  const std::uint64_t concat = (sum_n << m) | bias_low;
  const std::int64_t v = approximate(cfg) ? variate_term(consts, sum_x_n) : 0;
  const std::int64_t out = static_cast<std::int64_t>(concat) + v;
  if (out < 0 || static_cast<std::uint64_t>(out) > width_max(output_width)) {
    throw SimulatorFault("MAC+ output " + std::to_string(out) + " exceeds its " +
                         std::to_string(output_width) + "-bit adder");
  }
  return out;
}

}  // namespace

ArrayWidths array_widths(unsigned n, const AxMultConfig& mult) {
  validate(mult);
  if (n == 0) throw ConfigError("array dimension N must be at least 1");
  ArrayWidths w;
  w.main_adder = bits_for(std::uint64_t{n} * kProductMax);
  w.star_adder = w.main_adder - mult.shift();
  const std::uint64_t max_sumx = std::uint64_t{n} * max_x_value(mult);
  w.sumx_adder = bits_for(max_sumx);
  w.paper_sumx_adder = max_sumx == 0 ? 0 : ceil_log2(max_sumx);
  w.plus_mult_c = kOperandBits;
  return w;
}

MacArrayConfig MacArrayConfig::make(unsigned n, const AxMultConfig& mult, unsigned plus_latency) {
  if (plus_latency < 1 || plus_latency > 2) {
    throw ConfigError("MAC+ latency must be 1 or 2 cycles");
  }
  MacArrayConfig cfg;
  cfg.n = n;
  cfg.mult = mult;
  cfg.widths = array_widths(n, mult);
  cfg.plus_latency = plus_latency;
  return cfg;
}

BiasSplit split_bias(std::int64_t bias) {
  const auto low = static_cast<std::uint8_t>(static_cast<std::uint64_t>(bias) & kOperandMax);
  return {low, bias - low};
}

RowState initial_row_state(const MacArrayConfig& cfg, std::uint8_t bias_byte) {
  RowState s;
  s.sum = bias_byte >> cfg.mult.shift();
  return s;
}

RowState mac_star_step(const MacArrayConfig& cfg, std::uint8_t w, std::uint8_t a,
                       const RowState& state) {
  return step(cfg, w, a, state, 0);
}

std::int64_t mac_plus(const MacArrayConfig& cfg, const FilterConstants& consts,
                      std::uint64_t sum_n, std::uint64_t sum_x_n, std::uint32_t bias_low) {
  return finalize(cfg, consts, sum_n, sum_x_n, bias_low, cfg.widths.main_adder);
}

std::uint64_t exact_array_cycles(std::size_t rows, std::size_t cols, std::size_t vectors) {
  if (rows == 0 || cols == 0 || vectors == 0) return 0;
  return rows + cols + vectors - 2;
}

void write_trace_csv(std::ostream& os, std::span<const TraceRecord> trace) {
  os << "cycle,vector,row,col,sum,sumX\n";
  for (const auto& t : trace) {
    os << t.cycle << ',' << t.vector << ',' << t.row << ',' << t.col << ',' << t.sum << ','
       << t.sum_x << '\n';
  }
}

SystolicArray::SystolicArray(MacArrayConfig cfg) : cfg_(std::move(cfg)) {}

std::uint64_t SystolicArray::run_pass(const PassInput& in, std::vector<RowState>& states) {
  const std::size_t vectors = in.activations.size();
  const std::size_t rows = in.rows;
  const std::size_t cols = in.cols;
  const std::uint64_t cycles = exact_array_cycles(rows, cols, vectors);

  for (std::uint64_t t = 0; t < cycles; ++t) {
    for (std::size_t r = 0; r < rows && r <= t; ++r) {
      const std::size_t diag = t - r;  // v + h
      const std::size_t v_lo = diag >= cols ? diag - (cols - 1) : 0;
      const std::size_t v_hi = std::min(vectors - 1, diag);
      for (std::size_t v = v_lo; v <= v_hi; ++v) {
        const std::size_t h = diag - v;
        const std::uint8_t w = in.weights[r * in.weight_stride + in.col_offset + h];
        const std::uint8_t a = in.activations[v][in.col_offset + h];
        std::uint32_t fault_mask = 0;
        if (fault_ && fault_->vector == v && fault_->row == in.row_offset + r &&
            fault_->col == in.col_offset + h) {
          fault_mask = 1u << fault_->bit;
        }
        RowState& st = states[v * rows + r];
        st = step(cfg_, w, a, st, fault_mask);
        if (trace_on_) {
          trace_.push_back({cycle_base_ + t, v, in.row_offset + r, in.col_offset + h, st.sum, st.sum_x});
        }
      }
    }
  }
  return cycles;
}

TileResult SystolicArray::run_tile(const TileInput& tile) {
  const bool approx = approximate(cfg_);
  if (tile.rows == 0 || tile.cols == 0 || tile.rows > cfg_.n || tile.cols > cfg_.n) {
    throw ShapeError("tile " + std::to_string(tile.rows) + "x" + std::to_string(tile.cols) +
                     " does not fit a " + std::to_string(cfg_.n) + "x" + std::to_string(cfg_.n) +
                     " array");
  }
  if (tile.weights.size() != tile.rows * tile.cols) throw ShapeError("weight tile size mismatch");
  if (tile.biases.size() != tile.rows) throw ShapeError("one bias per tile row is required");
  if (approx && tile.constants.size() != tile.rows) {
    throw ShapeError("one set of filter constants per tile row is required");
  }
  if (tile.activations.empty()) throw ShapeError("activation stream is empty");
  for (const auto& act : tile.activations) {
    if (act.size() != tile.cols) throw ShapeError("activation vector length mismatch");
  }

  const std::size_t vectors = tile.activations.size();
  std::vector<BiasSplit> bias(tile.rows);
  for (std::size_t r = 0; r < tile.rows; ++r) {
    bias[r] = split_bias(approx ? folded_bias(tile.constants[r], tile.biases[r]) : tile.biases[r]);
  }
  std::vector<RowState> states(vectors * tile.rows);
  for (std::size_t v = 0; v < vectors; ++v) {
    for (std::size_t r = 0; r < tile.rows; ++r) {
      states[v * tile.rows + r] = initial_row_state(cfg_, bias[r].low_byte);
    }
  }

  PassInput pass;
  pass.rows = tile.rows;
  pass.cols = tile.cols;
  pass.weights = tile.weights.data();
  pass.weight_stride = tile.cols;
  pass.activations = tile.activations;
  trace_.clear();
  cycle_base_ = 0;

  TileResult result;
  result.cycles = run_pass(pass, states) + (approx ? cfg_.plus_latency : 0);
  result.passes = 1;
  result.outputs.assign(vectors, std::vector<std::int64_t>(tile.rows));
  const std::uint32_t low_mask = cfg_.mult.low_mask();
  for (std::size_t v = 0; v < vectors; ++v) {
    for (std::size_t r = 0; r < tile.rows; ++r) {
      const RowState& st = states[v * tile.rows + r];
      const std::int64_t core =
          approx ? mac_plus(cfg_, tile.constants[r], st.sum, st.sum_x, bias[r].low_byte & low_mask)
                 : static_cast<std::int64_t>(st.sum);
      result.outputs[v][r] = core + bias[r].high;
    }
  }
  return result;
}

TileResult SystolicArray::run_filter_bank(std::span<const Filter> filters,
                                          std::span<const std::vector<std::uint8_t>> activations,
                                          std::span<const FilterConstants> constants) {
  const bool approx = approximate(cfg_);
  if (filters.empty() || activations.empty()) throw ShapeError("empty filter bank or activation stream");
  const std::size_t k = filters.front().size();
  if (k == 0) throw ShapeError("filters must be non-empty");
  for (const auto& f : filters) {
    if (f.size() != k) throw ShapeError("all filters in a bank must have the same length");
  }
  for (const auto& act : activations) {
    if (act.size() != k) throw ShapeError("activation vector length mismatch");
  }
  if (approx && constants.size() != filters.size()) {
    throw ShapeError("one set of filter constants per filter is required");
  }

  const std::size_t n = cfg_.n;
  const std::size_t vectors = activations.size();
  const std::size_t col_passes = (k + n - 1) / n;
  const unsigned output_width =
      bits_for(static_cast<std::uint64_t>(col_passes) * n * kProductMax);
  const std::uint32_t low_mask = cfg_.mult.low_mask();

  TileResult result;
  result.outputs.assign(vectors, std::vector<std::int64_t>(filters.size()));
  trace_.clear();
  cycle_base_ = 0;

  for (std::size_t row0 = 0; row0 < filters.size(); row0 += n) {
    const std::size_t rows = std::min(n, filters.size() - row0);
    std::vector<std::uint8_t> weights(rows * k);
    std::vector<BiasSplit> bias(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const Filter& f = filters[row0 + r];
      std::copy(f.weights.begin(), f.weights.end(), weights.begin() + static_cast<std::ptrdiff_t>(r * k));
      bias[r] = split_bias(approx ? folded_bias(constants[row0 + r], f.bias) : f.bias);
    }

    std::vector<std::uint64_t> total_sum(vectors * rows, 0), total_sx(vectors * rows, 0);
    for (std::size_t col0 = 0; col0 < k; col0 += n) {
      const std::size_t cols = std::min(n, k - col0);
      std::vector<RowState> states(vectors * rows);
      if (col0 == 0) {
        for (std::size_t v = 0; v < vectors; ++v) {
          for (std::size_t r = 0; r < rows; ++r) {
            states[v * rows + r] = initial_row_state(cfg_, bias[r].low_byte);
          }
        }
      }
      PassInput pass;
      pass.rows = rows;
      pass.cols = cols;
      pass.col_offset = col0;
      pass.row_offset = row0;
      pass.weights = weights.data();
      pass.weight_stride = k;
      pass.activations = activations;
      const std::uint64_t cycles = run_pass(pass, states) + (approx ? cfg_.plus_latency : 0);
      cycle_base_ += cycles;
      result.cycles += cycles;
      ++result.passes;
      for (std::size_t i = 0; i < states.size(); ++i) {
        total_sum[i] += states[i].sum;
        total_sx[i] += states[i].sum_x;
      }
    }

    for (std::size_t v = 0; v < vectors; ++v) {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = v * rows + r;
        const std::int64_t core =
            approx ? finalize(cfg_, constants[row0 + r], total_sum[i], total_sx[i],
                              bias[r].low_byte & low_mask, output_width)
                   : static_cast<std::int64_t>(total_sum[i]);
        result.outputs[v][row0 + r] = core + bias[r].high;
      }
    }
  }
  return result;
}

TileResult run_tile(const MacArrayConfig& cfg, const TileInput& tile) {
  SystolicArray array(cfg);
  return array.run_tile(tile);
}

EquivalenceSummary check_equivalence(const MacArrayConfig& cfg, const EquivalenceOptions& options) {
  if (options.vectors == 0) throw ConfigError("equivalence check needs at least one vector per tile");
  EquivalenceSummary summary;
  SystolicArray array(cfg);
  const unsigned plus = cfg.mult.kind == MultKind::Exact ? 0 : cfg.plus_latency;
  std::vector<Filter> filters;
  for (std::size_t t = 0; t < options.tiles; ++t) {
    Rng rng = make_rng(options.seed, t);
    std::uniform_int_distribution<std::size_t> dim(1, cfg.n);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<std::int64_t> bias(-(std::int64_t{1} << 20), std::int64_t{1} << 20);
    TileInput tile;
    tile.rows = options.full_tiles ? cfg.n : dim(rng);
    tile.cols = options.full_tiles ? cfg.n : dim(rng);
    filters.assign(tile.rows, Filter{});
    for (auto& f : filters) {
      f.weights.resize(tile.cols);
      for (auto& w : f.weights) w = static_cast<std::uint8_t>(byte(rng));
      f.bias = bias(rng);
      tile.weights.insert(tile.weights.end(), f.weights.begin(), f.weights.end());
      tile.biases.push_back(f.bias);
      tile.constants.push_back(derive_constants(cfg.mult, f, options.precision));
    }
    tile.activations.assign(options.vectors, std::vector<std::uint8_t>(tile.cols));
    for (auto& a : tile.activations)
      for (auto& x : a) x = static_cast<std::uint8_t>(byte(rng));

    array.inject_fault(t == 0 ? options.fault : std::nullopt);
    const TileResult res = array.run_tile(tile);
    ++summary.tiles;
    summary.latency_mismatches += res.cycles != exact_array_cycles(tile.rows, tile.cols, options.vectors) + plus;
    for (std::size_t v = 0; v < options.vectors; ++v) {
      for (std::size_t r = 0; r < tile.rows; ++r) {
        const std::int64_t expected = corrected_dot(tile.constants[r], filters[r], tile.activations[v]);
        ++summary.outputs;
        if (res.outputs[v][r] == expected) continue;
        ++summary.mismatches;
        if (!summary.first_mismatch) summary.first_mismatch = EquivalenceMismatch{t, v, r, expected, res.outputs[v][r]};
      }
    }
  }
  return summary;
}

}  // namespace axcv
