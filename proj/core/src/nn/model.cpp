#include "axcv/nn/model.hpp"

#include <sstream>

#include "axcv/error.hpp"

namespace axcv::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] void bad(const std::string& layer, const std::string& msg) {
  throw ShapeError("layer '" + layer + "': " + msg);
}

std::size_t pooled(std::size_t in, std::size_t size, std::size_t stride, const std::string& name) {
  if (size == 0 || stride == 0) bad(name, "pool size and stride must be positive");
  if (in < size) bad(name, "pool window larger than input");
  return (in - size) / stride + 1;
}

}  // namespace

std::string layer_type(const Layer& layer) {
  return std::visit(overloaded{
                        [](const Conv2DLayer&) { return std::string("conv2d"); },
                        [](const DenseLayer&) { return std::string("dense"); },
                        [](const ReluLayer&) { return std::string("relu"); },
                        [](const MaxPoolLayer&) { return std::string("maxpool"); },
                        [](const AvgPoolLayer&) { return std::string("avgpool"); },
                        [](const FlattenLayer&) { return std::string("flatten"); },
                    },
                    layer);
}

const std::string& layer_name(const Layer& layer) {
  return std::visit([](const auto& l) -> const std::string& { return l.name; }, layer);
}

bool is_compute_layer(const Layer& layer) {
  return std::holds_alternative<Conv2DLayer>(layer) || std::holds_alternative<DenseLayer>(layer);
}

std::vector<std::vector<std::size_t>> validate_model(const QuantizedModel& model) {
  if (model.input_shape.size() != 3) throw ShapeError("input shape must be H x W x C");
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::size_t> cur = model.input_shape;
  bool logits_seen = false;
  for (const auto& layer : model.layers) {
    const std::string& name = layer_name(layer);
    if (logits_seen) bad(name, "layers after a logits layer");
    std::visit(overloaded{
                   [&](const Conv2DLayer& l) {
                     if (cur.size() != 3) bad(name, "conv2d needs an H x W x C input");
                     if (cur[2] != l.in_channels) bad(name, "input channels " + std::to_string(cur[2]) + " != " + std::to_string(l.in_channels));
                     if (l.kernel_h == 0 || l.kernel_w == 0 || l.out_channels == 0 || l.stride == 0) bad(name, "zero-sized kernel");
                     if (l.weights.size() != l.out_channels * l.filter_size()) bad(name, "weight count does not match kernel shape");
                     if (l.bias.size() != l.out_channels) bad(name, "bias count does not match output channels");
                     const std::size_t ph = cur[0] + 2 * l.padding, pw = cur[1] + 2 * l.padding;
                     if (ph < l.kernel_h || pw < l.kernel_w) bad(name, "kernel larger than padded input");
                     cur = {(ph - l.kernel_h) / l.stride + 1, (pw - l.kernel_w) / l.stride + 1, l.out_channels};
                   },
                   [&](const DenseLayer& l) {
                     if (cur.size() != 1) bad(name, "dense needs a flattened input");
                     if (cur[0] != l.in_features) bad(name, "in_features " + std::to_string(l.in_features) + " != " + std::to_string(cur[0]));
                     if (l.weights.size() != l.in_features * l.out_features) bad(name, "weight count does not match shape");
                     if (l.bias.size() != l.out_features) bad(name, "bias count does not match out_features");
                     cur = {l.out_features};
                     logits_seen = l.logits;
                   },
                   [&](const ReluLayer&) {},
                   [&](const MaxPoolLayer& l) {
                     if (cur.size() != 3) bad(name, "pooling needs an H x W x C input");
                     cur = {pooled(cur[0], l.size, l.stride, name), pooled(cur[1], l.size, l.stride, name), cur[2]};
                   },
                   [&](const AvgPoolLayer& l) {
                     if (cur.size() != 3) bad(name, "pooling needs an H x W x C input");
                     cur = {pooled(cur[0], l.size, l.stride, name), pooled(cur[1], l.size, l.stride, name), cur[2]};
                   },
                   [&](const FlattenLayer&) { cur = {shape_size(cur)}; },
               },
               layer);
    shapes.push_back(cur);
  }
  if (model.num_classes != 0 && shape_size(cur) != model.num_classes) {
    throw ShapeError("final output has " + std::to_string(shape_size(cur)) + " values, expected " +
                     std::to_string(model.num_classes) + " classes");
  }
  return shapes;
}

std::string layer_manifest(const QuantizedModel& model) {
  const auto shapes = validate_model(model);
  std::ostringstream os;
  os << "input " << shape_str(model.input_shape) << "\n";
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    os << layer_name(l) << " " << layer_type(l) << " " << shape_str(shapes[i]);
    if (const auto* c = std::get_if<Conv2DLayer>(&l)) os << " k=" << c->filter_size();
    if (const auto* d = std::get_if<DenseLayer>(&l)) os << " k=" << d->filter_size() << (d->logits ? " logits" : "");
    os << "\n";
  }
  return os.str();
}

}  // namespace axcv::nn
