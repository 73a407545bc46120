#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "axcv/nn/tensor.hpp"

namespace axcv::nn {

struct Conv2DLayer {
  std::string name;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<std::uint8_t> weights;  // [out][kh][kw][in]
  QuantParams weight_quant;
  std::vector<std::int32_t> bias;     // one per output channel, accumulator units
  QuantParams output_quant;
  Requant requant;

  std::size_t filter_size() const { return kernel_h * kernel_w * in_channels; }
};

/// A dense layer with `logits` set is the last compute layer and emits its
/// raw accumulators instead of requantized codes.
struct DenseLayer {
  std::string name;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::vector<std::uint8_t> weights;  // [out][in]
  QuantParams weight_quant;
  std::vector<std::int32_t> bias;
  QuantParams output_quant;
  Requant requant;
  bool logits = false;

  std::size_t filter_size() const { return in_features; }
};

struct ReluLayer {
  std::string name;
};

struct MaxPoolLayer {
  std::string name;
  std::size_t size = 2;
  std::size_t stride = 2;
};

struct AvgPoolLayer {
  std::string name;
  std::size_t size = 2;
  std::size_t stride = 2;
};

struct FlattenLayer {
  std::string name;
};

using Layer = std::variant<Conv2DLayer, DenseLayer, ReluLayer, MaxPoolLayer, AvgPoolLayer, FlattenLayer>;

std::string layer_type(const Layer& layer);
const std::string& layer_name(const Layer& layer);
bool is_compute_layer(const Layer& layer);

struct QuantizedModel {
  std::string name;
  std::uint32_t format_version = 1;
  std::vector<std::size_t> input_shape;  // H, W, C
  QuantParams input_quant;
  std::size_t num_classes = 0;
  std::vector<Layer> layers;
  std::optional<double> reference_accuracy;
  std::string checksum;  // sha256 of the blob region, hex
  std::map<std::string, std::string> metadata;
};

/// Walks the chain and checks that every layer's input shape matches the
/// previous output. Returns the shape after each layer.
std::vector<std::vector<std::size_t>> validate_model(const QuantizedModel& model);

/// One line per layer: name, type, output shape.
std::string layer_manifest(const QuantizedModel& model);

}  // namespace axcv::nn
