#pragma once

// Functional, width-faithful model of a weight-stationary N x N MAC array
// whose MAC units are replaced by MAC* units (approximate multiplier plus a
// running sum of control-variate inputs), followed by one extra column of
// MAC+ units that scale sumX by C and restore the bias low bits.
//
// Row r holds filter r. Partial sums move right along the row; activation h
// of vector v reaches PE(r, h) at cycle v + r + h.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "axcv/axmult.hpp"
#include "axcv/covar.hpp"

namespace axcv {

struct ArrayWidths {
  unsigned main_adder = 0;        // accurate MAC accumulator
  unsigned star_adder = 0;        // MAC* accumulator, main_adder - m
  unsigned sumx_adder = 0;        // MAC* sumX accumulator
  unsigned plus_mult_c = 8;       // C operand of the MAC+ multiplier
  unsigned paper_sumx_adder = 0;  // ceil(log2(max sumX)), as usually quoted
};

/// Widths are the bit counts that hold the largest reachable value:
/// bits_for(N * (2^16 - 1)) for the main adder and bits_for(N * max x) for
/// sumX. This agrees with ceil(log2(max)) except when max is a power of two.
ArrayWidths array_widths(unsigned n, const AxMultConfig& mult);

struct MacArrayConfig {
  unsigned n = 0;
  AxMultConfig mult;
  ArrayWidths widths;
  unsigned plus_latency = 1;  // extra cycles for the MAC+ column (1, or 2 if pipelined)

  static MacArrayConfig make(unsigned n, const AxMultConfig& mult, unsigned plus_latency = 1);
};

struct RowState {
  std::uint64_t sum = 0;
  std::uint64_t sum_x = 0;
  unsigned h = 0;  // index of the next column to visit
};

/// B[7:0] = low_byte, B = high + low_byte.
struct BiasSplit {
  std::uint8_t low_byte = 0;
  std::int64_t high = 0;
};
BiasSplit split_bias(std::int64_t bias);

/// sum_0 = B[7:m], sumX_0 = 0.
RowState initial_row_state(const MacArrayConfig& cfg, std::uint8_t bias_byte);

/// One MAC* column. Throws SimulatorFault when an accumulator leaves its width.
RowState mac_star_step(const MacArrayConfig& cfg, std::uint8_t w, std::uint8_t a,
                       const RowState& state);

/// G* = {sum_N, B[m-1:0]} + round(C * sumX_N).
std::int64_t mac_plus(const MacArrayConfig& cfg, const FilterConstants& consts,
                      std::uint64_t sum_n, std::uint64_t sum_x_n, std::uint32_t bias_low);

/// Cycles for the accurate array to stream `vectors` vectors through a
/// rows x cols tile.
std::uint64_t exact_array_cycles(std::size_t rows, std::size_t cols, std::size_t vectors);

struct TileInput {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> weights;                     // rows x cols, row-major
  std::vector<std::vector<std::uint8_t>> activations;    // each of length cols
  std::vector<std::int64_t> biases;                      // one per row
  std::vector<FilterConstants> constants;                // one per row; unused for Exact
};

struct TileResult {
  std::vector<std::vector<std::int64_t>> outputs;  // [vector][row]
  std::uint64_t cycles = 0;
  std::uint64_t passes = 0;
};

struct TraceRecord {
  std::uint64_t cycle = 0;
  std::size_t vector = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::uint64_t sum = 0;
  std::uint64_t sum_x = 0;
};

void write_trace_csv(std::ostream& os, std::span<const TraceRecord> trace);

/// Flips one bit of the reduced product computed by PE(row, col) for the
/// given vector. Test hook for the equivalence checker.
struct FaultInjection {
  std::size_t vector = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  unsigned bit = 0;
};

/// Holds mutable per-run state (trace buffer, fault hook); one instance per thread.
class SystolicArray {
 public:
  explicit SystolicArray(MacArrayConfig cfg);

  const MacArrayConfig& config() const { return cfg_; }

  void enable_trace(bool on) { trace_on_ = on; }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  void inject_fault(std::optional<FaultInjection> fault) { fault_ = fault; }

  TileResult run_tile(const TileInput& tile);

  /// Filters longer than N are split into ceil(k / N) column passes and
  /// filter counts above N into row groups; partial sum and sumX are carried
  /// between passes at full width and MAC+ finalises after the last pass.
  TileResult run_filter_bank(std::span<const Filter> filters,
                             std::span<const std::vector<std::uint8_t>> activations,
                             std::span<const FilterConstants> constants);

 private:
  struct PassInput {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t col_offset = 0;
    std::size_t row_offset = 0;
    const std::uint8_t* weights = nullptr;  // rows x weight_stride
    std::size_t weight_stride = 0;
    std::span<const std::vector<std::uint8_t>> activations;
  };

  // Runs one wavefront pass; states[v * rows + r] holds the row states on entry and exit.
  std::uint64_t run_pass(const PassInput& in, std::vector<RowState>& states);

  MacArrayConfig cfg_;
  bool trace_on_ = false;
  std::vector<TraceRecord> trace_;
  std::optional<FaultInjection> fault_;
  std::uint64_t cycle_base_ = 0;
};

TileResult run_tile(const MacArrayConfig& cfg, const TileInput& tile);

/// Randomised comparison of the array against corrected_dot. Tile t draws its
/// weights, biases and activations from make_rng(seed, t), so any failure is
/// reproducible from (seed, tile) alone.
struct EquivalenceOptions {
  std::size_t tiles = 1000;
  std::size_t vectors = 2;  // activation vectors streamed per tile
  std::uint64_t seed = 1;
  ConstantPrecision precision = ConstantPrecision::Fixed8;
  bool full_tiles = true;  // rows = cols = N; otherwise shapes drawn from [1, N]
  std::optional<FaultInjection> fault;  // applied to tile 0 only
};

struct EquivalenceMismatch {
  std::size_t tile = 0;
  std::size_t vector = 0;
  std::size_t row = 0;
  std::int64_t expected = 0;
  std::int64_t actual = 0;
};

struct EquivalenceSummary {
  std::size_t tiles = 0;
  std::size_t outputs = 0;
  std::size_t mismatches = 0;
  std::size_t latency_mismatches = 0;
  std::optional<EquivalenceMismatch> first_mismatch;

  bool passed() const { return mismatches == 0 && latency_mismatches == 0; }
};

EquivalenceSummary check_equivalence(const MacArrayConfig& cfg, const EquivalenceOptions& options);

}  // namespace axcv
