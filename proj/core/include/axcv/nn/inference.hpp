#pragma once

// Quantized inference where every code-by-code product goes through the
// configured multiplier. With per-tensor affine quantization the accumulator
//
//   acc = bias + sum (W - zw)(A - za)
//       = bias + sum W*A - za*sum W - zw*sum A + k*za*zw
//
// only the sum W*A involves products; it is replaced by the (optionally
// control-variate corrected) approximate sum while the zero-point terms stay
// exact.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "axcv/axmult.hpp"
#include "axcv/covar.hpp"
#include "axcv/nn/format.hpp"
#include "axcv/nn/model.hpp"

namespace axcv::nn {

struct InferenceOptions {
  AxMultConfig mult;
  bool with_variate = true;
  ConstantPrecision precision = ConstantPrecision::Fixed8;
  /// Add C0 at runtime instead of folding it into the bias (must not change results).
  bool runtime_c0 = false;
};

/// Squared error of each compute layer's accumulators against the exact
/// accumulators on the same layer input, in dequantized units.
struct LayerError {
  std::string name;
  double sum_squared = 0.0;
  std::uint64_t count = 0;

  double mse() const { return count ? sum_squared / static_cast<double>(count) : 0.0; }
};

/// Output of the last compute layer: raw accumulators for a logits layer,
/// codes otherwise.
using Logits = std::vector<std::int64_t>;

class InferenceEngine {
 public:
  InferenceEngine(const QuantizedModel& model, InferenceOptions options);

  const InferenceOptions& options() const { return options_; }
  /// Per compute layer, one FilterConstants per output channel.
  const std::vector<std::vector<FilterConstants>>& constants() const { return constants_; }

  Logits forward(const QuantizedTensor& input, std::vector<LayerError>* errors = nullptr) const;
  Logits forward(std::span<const std::uint8_t> image, std::vector<LayerError>* errors = nullptr) const;

  /// Accumulators of one conv layer; `layer_index` selects the constants.
  std::vector<std::int64_t> conv_accumulators(std::size_t layer_index, const Conv2DLayer& layer,
                                              const QuantizedTensor& input,
                                              std::vector<std::size_t>& out_shape) const;
  std::vector<std::int64_t> dense_accumulators(std::size_t layer_index, const DenseLayer& layer,
                                               const QuantizedTensor& input) const;

 private:
  std::int64_t dot(std::span<const std::uint8_t> weights, std::span<const std::uint8_t> acts,
                   const FilterConstants* consts) const;

  const QuantizedModel& model_;
  InferenceOptions options_;
  std::vector<std::vector<FilterConstants>> constants_;  // indexed by layer
  std::vector<std::uint32_t> product_;                   // AM(w, a) at w << 8 | a
  std::vector<std::uint32_t> x_;                         // x_value(a)
};

/// Single conv layer through the approximate path, requantized to uint8.
QuantizedTensor conv2d_approx(const Conv2DLayer& layer, const QuantizedTensor& input,
                              const AxMultConfig& cfg, bool with_variate = true,
                              ConstantPrecision precision = ConstantPrecision::Fixed8);

/// Straightforward integer reference: direct sum of (W - zw)(A - za), no
/// zero-point expansion and no multiplier model.
std::vector<std::int64_t> reference_conv2d_accumulators(const Conv2DLayer& layer,
                                                        const QuantizedTensor& input,
                                                        std::vector<std::size_t>& out_shape);
QuantizedTensor reference_conv2d(const Conv2DLayer& layer, const QuantizedTensor& input);
Logits reference_forward(const QuantizedModel& model, std::span<const std::uint8_t> image);

QuantizedTensor make_input(const QuantizedModel& model, std::span<const std::uint8_t> image);

std::size_t argmax(const Logits& logits);

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<LayerError> per_layer;
  std::vector<std::uint8_t> predictions;
};

EvalResult evaluate(const QuantizedModel& model, const Dataset& dataset,
                    const InferenceOptions& options, bool collect_layer_error = true);

/// Accuracy of the reference path.
EvalResult evaluate_reference(const QuantizedModel& model, const Dataset& dataset);

}  // namespace axcv::nn
