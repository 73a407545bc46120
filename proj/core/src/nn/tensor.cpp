#include "axcv/nn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "axcv/error.hpp"
#include "axcv/rounding.hpp"

namespace axcv::nn {

std::int64_t requantize(std::int64_t acc, const Requant& rq) {
  if (rq.shift < 0 || rq.shift > 62) throw ConfigError("requant shift out of range: " + std::to_string(rq.shift));
  return round_half_even(static_cast<int128_t>(acc) * rq.multiplier, std::int64_t{1} << rq.shift);
}

std::uint8_t requantize_to_code(std::int64_t acc, const Requant& rq, std::int32_t zero_point) {
  const std::int64_t v = requantize(acc, rq) + zero_point;
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(v, 0, 255));
}

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::size_t QuantizedTensor::element_count() const { return shape_size(shape); }

}  // namespace axcv::nn
