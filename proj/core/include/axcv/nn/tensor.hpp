#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace axcv::nn {

/// real = scale * (code - zero_point)
struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

/// Integer requantization: an int32/int64 accumulator is scaled by
/// multiplier * 2^-shift with round-half-to-even.
struct Requant {
  std::int64_t multiplier = 1;
  int shift = 0;

  friend bool operator==(const Requant&, const Requant&) = default;
};

std::int64_t requantize(std::int64_t acc, const Requant& rq);

/// zero_point + requantize(acc), saturated to [0, 255].
std::uint8_t requantize_to_code(std::int64_t acc, const Requant& rq, std::int32_t zero_point);

struct QuantizedTensor {
  std::vector<std::size_t> shape;  // HWC for feature maps, {n} for vectors
  std::vector<std::uint8_t> codes;
  QuantParams quant;

  std::size_t element_count() const;
  double dequantize(std::size_t i) const { return quant.scale * (static_cast<int>(codes[i]) - quant.zero_point); }
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

}  // namespace axcv::nn
