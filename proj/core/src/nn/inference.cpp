#include "axcv/nn/inference.hpp"

#include <algorithm>

#include "axcv/error.hpp"
#include "axcv/rounding.hpp"

namespace axcv::nn {

namespace {

// Non-owning view of the lookup tables for one multiplier configuration.
struct MultTables {
  const std::uint32_t* product;  // AM(w, a) at w << 8 | a
  const std::uint32_t* x;        // x input per activation code
  bool exact;
};

struct OwnedTables {
  std::vector<std::uint32_t> product;
  std::vector<std::uint32_t> x;
  bool exact = true;

  MultTables view() const { return {product.data(), x.data(), exact}; }
};

OwnedTables make_tables(const AxMultConfig& cfg) {
  validate(cfg);
  OwnedTables t;
  t.exact = cfg.kind == MultKind::Exact;
  t.product.resize(1u << 16);
  t.x.assign(256, 0);
  for (std::uint32_t w = 0; w < 256; ++w) {
    for (std::uint32_t a = 0; a < 256; ++a) {
      t.product[(w << 8) | a] = multiply_approx(cfg, static_cast<std::uint8_t>(w), static_cast<std::uint8_t>(a)).value;
    }
  }
  if (!t.exact) {
    for (std::uint32_t a = 0; a < 256; ++a) t.x[a] = x_value(cfg, static_cast<std::uint8_t>(a));
  }
  return t;
}

std::vector<FilterConstants> filter_constants(const AxMultConfig& cfg, std::span<const std::uint8_t> weights,
                                              const std::vector<std::int32_t>& bias, std::size_t k,
                                              ConstantPrecision precision) {
  std::vector<FilterConstants> out;
  out.reserve(bias.size());
  for (std::size_t f = 0; f < bias.size(); ++f) {
    Filter filter{std::vector<std::uint8_t>(weights.begin() + f * k, weights.begin() + (f + 1) * k), bias[f]};
    out.push_back(derive_constants(cfg, filter, precision));
  }
  return out;
}

// Accumulators for `filters` filters of length k over `patches` (each k codes).
// With `exact_out` the exact accumulators on the same patches are produced too.
struct GemmArgs {
  std::span<const std::uint8_t> weights;
  const std::vector<std::int32_t>* bias;
  std::int32_t zw;
  std::int32_t za;
  std::size_t k;
};

void accumulate(const GemmArgs& g, const MultTables& t, const std::vector<FilterConstants>* consts,
                const InferenceOptions& opt, std::span<const std::uint8_t> patch, std::int64_t* out,
                std::int64_t* exact_out) {
  const std::size_t filters = g.bias->size();
  std::int64_t sum_a = 0;
  std::uint64_t sum_x = 0;
  for (std::size_t j = 0; j < g.k; ++j) {
    sum_a += patch[j];
    sum_x += t.x[patch[j]];
  }
  const bool variate = opt.with_variate && !t.exact && consts != nullptr;
  for (std::size_t f = 0; f < filters; ++f) {
    const std::uint8_t* w = g.weights.data() + f * g.k;
    std::int64_t sum_w = 0, approx = 0;
    for (std::size_t j = 0; j < g.k; ++j) {
      sum_w += w[j];
      approx += t.product[(std::uint32_t{w[j]} << 8) | patch[j]];
    }
    const std::int64_t zero_terms =
        -static_cast<std::int64_t>(g.za) * sum_w - static_cast<std::int64_t>(g.zw) * sum_a +
        static_cast<std::int64_t>(g.k) * g.za * g.zw;
    std::int64_t bias = (*g.bias)[f];
    if (variate) {
      const FilterConstants& c = (*consts)[f];
      // C0 either folded into the bias offline or added by MAC+ at runtime.
      if (opt.runtime_c0) {
        approx += control_variate(c, sum_x);
      } else {
        bias = folded_bias(c, bias);
        approx += variate_term(c, sum_x);
      }
    }
    out[f] = bias + approx + zero_terms;
    if (exact_out) {
      std::int64_t exact = 0;
      for (std::size_t j = 0; j < g.k; ++j) exact += std::int64_t{w[j]} * patch[j];
      exact_out[f] = (*g.bias)[f] + exact + zero_terms;
    }
  }
}

std::vector<std::size_t> conv_out_shape(const Conv2DLayer& l, const QuantizedTensor& in) {
  if (in.shape.size() != 3 || in.shape[2] != l.in_channels) {
    throw ShapeError("layer '" + l.name + "': expected H x W x " + std::to_string(l.in_channels) + " input");
  }
  if (in.codes.size() != in.element_count()) throw ShapeError("tensor data does not match its shape");
  const std::size_t ph = in.shape[0] + 2 * l.padding, pw = in.shape[1] + 2 * l.padding;
  if (ph < l.kernel_h || pw < l.kernel_w) throw ShapeError("layer '" + l.name + "': kernel larger than input");
  return {(ph - l.kernel_h) / l.stride + 1, (pw - l.kernel_w) / l.stride + 1, l.out_channels};
}

// Patch in [kh][kw][c] order; out-of-bounds taps carry the activation zero point.
void im2col(const Conv2DLayer& l, const QuantizedTensor& in, std::size_t oy, std::size_t ox,
            std::vector<std::uint8_t>& patch) {
  const std::size_t H = in.shape[0], W = in.shape[1], C = in.shape[2];
  const auto pad = static_cast<std::uint8_t>(in.quant.zero_point);
  std::size_t p = 0;
  for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(l.padding);
    for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
      const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(l.padding);
      if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(H) || x >= static_cast<std::ptrdiff_t>(W)) {
        std::fill_n(patch.begin() + static_cast<std::ptrdiff_t>(p), C, pad);
      } else {
        const auto* src = in.codes.data() + (static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * C;
        std::copy_n(src, C, patch.begin() + static_cast<std::ptrdiff_t>(p));
      }
      p += C;
    }
  }
}

std::vector<std::int64_t> conv_impl(const Conv2DLayer& l, const QuantizedTensor& in, const MultTables& t,
                                    const std::vector<FilterConstants>* consts, const InferenceOptions& opt,
                                    std::vector<std::size_t>& out_shape, std::vector<std::int64_t>* exact) {
  out_shape = conv_out_shape(l, in);
  const std::size_t k = l.filter_size(), F = l.out_channels;
  std::vector<std::int64_t> out(shape_size(out_shape));
  if (exact) exact->assign(out.size(), 0);
  std::vector<std::uint8_t> patch(k);
  const GemmArgs g{l.weights, &l.bias, l.weight_quant.zero_point, in.quant.zero_point, k};
  for (std::size_t oy = 0; oy < out_shape[0]; ++oy) {
    for (std::size_t ox = 0; ox < out_shape[1]; ++ox) {
      im2col(l, in, oy, ox, patch);
      const std::size_t base = (oy * out_shape[1] + ox) * F;
      accumulate(g, t, consts, opt, patch, out.data() + base, exact ? exact->data() + base : nullptr);
    }
  }
  return out;
}

std::vector<std::int64_t> dense_impl(const DenseLayer& l, const QuantizedTensor& in, const MultTables& t,
                                     const std::vector<FilterConstants>* consts, const InferenceOptions& opt,
                                     std::vector<std::int64_t>* exact) {
  if (in.codes.size() != l.in_features) {
    throw ShapeError("layer '" + l.name + "': expected " + std::to_string(l.in_features) + " inputs, got " +
                     std::to_string(in.codes.size()));
  }
  std::vector<std::int64_t> out(l.out_features);
  if (exact) exact->assign(out.size(), 0);
  const GemmArgs g{l.weights, &l.bias, l.weight_quant.zero_point, in.quant.zero_point, l.in_features};
  accumulate(g, t, consts, opt, in.codes, out.data(), exact ? exact->data() : nullptr);
  return out;
}

QuantizedTensor requantize_all(const std::vector<std::int64_t>& acc, std::vector<std::size_t> shape,
                               const Requant& rq, const QuantParams& out_q) {
  QuantizedTensor out{std::move(shape), std::vector<std::uint8_t>(acc.size()), out_q};
  for (std::size_t i = 0; i < acc.size(); ++i) out.codes[i] = requantize_to_code(acc[i], rq, out_q.zero_point);
  return out;
}

QuantizedTensor relu(QuantizedTensor t) {
  const auto zp = static_cast<std::uint8_t>(std::clamp(t.quant.zero_point, 0, 255));
  for (auto& c : t.codes) c = std::max(c, zp);
  return t;
}

template <bool Max>
QuantizedTensor pool(const QuantizedTensor& in, std::size_t size, std::size_t stride, const std::string& name) {
  if (in.shape.size() != 3) throw ShapeError("layer '" + name + "': pooling needs an H x W x C input");
  if (size == 0 || stride == 0 || in.shape[0] < size || in.shape[1] < size) {
    throw ShapeError("layer '" + name + "': bad pooling window");
  }
  const std::size_t H = in.shape[0], W = in.shape[1], C = in.shape[2];
  const std::size_t oh = (H - size) / stride + 1, ow = (W - size) / stride + 1;
  QuantizedTensor out{{oh, ow, C}, std::vector<std::uint8_t>(oh * ow * C), in.quant};
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        std::uint32_t acc = 0;
        for (std::size_t dy = 0; dy < size; ++dy)
          for (std::size_t dx = 0; dx < size; ++dx) {
            const std::uint8_t v = in.codes[((oy * stride + dy) * W + (ox * stride + dx)) * C + c];
            acc = Max ? std::max<std::uint32_t>(acc, v) : acc + v;
          }
        if constexpr (!Max) acc = static_cast<std::uint32_t>(round_half_even(acc, static_cast<std::int64_t>(size * size)));
        out.codes[(oy * ow + ox) * C + c] = static_cast<std::uint8_t>(acc);
      }
  return out;
}

// Applies a layer without products; returns false for compute layers.
bool apply_simple(const Layer& layer, QuantizedTensor& cur) {
  if (std::holds_alternative<ReluLayer>(layer)) {
    cur = relu(std::move(cur));
  } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
    cur = pool<true>(cur, p->size, p->stride, p->name);
  } else if (const auto* a = std::get_if<AvgPoolLayer>(&layer)) {
    cur = pool<false>(cur, a->size, a->stride, a->name);
  } else if (std::holds_alternative<FlattenLayer>(layer)) {
    cur.shape = {cur.codes.size()};
  } else {
    return false;
  }
  return true;
}

Logits codes_as_logits(const QuantizedTensor& t) { return Logits(t.codes.begin(), t.codes.end()); }

void add_error(LayerError& e, const std::vector<std::int64_t>& approx, const std::vector<std::int64_t>& exact,
               double scale) {
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double d = static_cast<double>(approx[i] - exact[i]) * scale;
    e.sum_squared += d * d;
  }
  e.count += approx.size();
}

}  // namespace

// --- engine ------------------------------------------------------------------

InferenceEngine::InferenceEngine(const QuantizedModel& model, InferenceOptions options)
    : model_(model), options_(options) {
  validate_model(model_);
  auto t = make_tables(options_.mult);
  product_ = std::move(t.product);
  x_ = std::move(t.x);
  constants_.resize(model_.layers.size());
  if (options_.mult.kind == MultKind::Exact) return;
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    if (const auto* c = std::get_if<Conv2DLayer>(&model_.layers[i])) {
      constants_[i] = filter_constants(options_.mult, c->weights, c->bias, c->filter_size(), options_.precision);
    } else if (const auto* d = std::get_if<DenseLayer>(&model_.layers[i])) {
      constants_[i] = filter_constants(options_.mult, d->weights, d->bias, d->filter_size(), options_.precision);
    }
  }
}

std::int64_t InferenceEngine::dot(std::span<const std::uint8_t> weights, std::span<const std::uint8_t> acts,
                                  const FilterConstants* consts) const {
  if (weights.size() != acts.size()) throw ShapeError("dot product length mismatch");
  std::int64_t acc = 0;
  std::uint64_t sx = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    acc += product_[(std::uint32_t{weights[j]} << 8) | acts[j]];
    sx += x_[acts[j]];
  }
  if (consts && options_.with_variate && options_.mult.kind != MultKind::Exact) acc += control_variate(*consts, sx);
  return acc;
}

std::vector<std::int64_t> InferenceEngine::conv_accumulators(std::size_t layer_index, const Conv2DLayer& layer,
                                                             const QuantizedTensor& input,
                                                             std::vector<std::size_t>& out_shape) const {
  const MultTables t{product_.data(), x_.data(), options_.mult.kind == MultKind::Exact};
  const auto* consts = constants_.at(layer_index).empty() ? nullptr : &constants_[layer_index];
  return conv_impl(layer, input, t, consts, options_, out_shape, nullptr);
}

std::vector<std::int64_t> InferenceEngine::dense_accumulators(std::size_t layer_index, const DenseLayer& layer,
                                                              const QuantizedTensor& input) const {
  const MultTables t{product_.data(), x_.data(), options_.mult.kind == MultKind::Exact};
  const auto* consts = constants_.at(layer_index).empty() ? nullptr : &constants_[layer_index];
  return dense_impl(layer, input, t, consts, options_, nullptr);
}

Logits InferenceEngine::forward(std::span<const std::uint8_t> image, std::vector<LayerError>* errors) const {
  return forward(make_input(model_, image), errors);
}

Logits InferenceEngine::forward(const QuantizedTensor& input, std::vector<LayerError>* errors) const {
  const MultTables t{product_.data(), x_.data(), options_.mult.kind == MultKind::Exact};
  if (errors && errors->empty()) {
    for (const auto& l : model_.layers) {
      if (is_compute_layer(l)) errors->push_back({layer_name(l), 0.0, 0});
    }
  }
  QuantizedTensor cur = input;
  std::size_t compute_idx = 0;
  std::vector<std::int64_t> exact;
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const Layer& layer = model_.layers[i];
    if (apply_simple(layer, cur)) continue;
    const auto* consts = constants_[i].empty() ? nullptr : &constants_[i];
    auto* exact_ptr = errors ? &exact : nullptr;
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
      std::vector<std::size_t> shape;
      auto acc = conv_impl(*c, cur, t, consts, options_, shape, exact_ptr);
      if (errors) add_error((*errors)[compute_idx], acc, exact, c->weight_quant.scale * cur.quant.scale);
      cur = requantize_all(acc, std::move(shape), c->requant, c->output_quant);
    } else {
      const auto& d = std::get<DenseLayer>(layer);
      auto acc = dense_impl(d, cur, t, consts, options_, exact_ptr);
      if (errors) add_error((*errors)[compute_idx], acc, exact, d.weight_quant.scale * cur.quant.scale);
      if (d.logits) return acc;
      cur = requantize_all(acc, {d.out_features}, d.requant, d.output_quant);
    }
    ++compute_idx;
  }
  return codes_as_logits(cur);
}

// --- free functions -----------------------------------------------------------

QuantizedTensor conv2d_approx(const Conv2DLayer& layer, const QuantizedTensor& input, const AxMultConfig& cfg,
                              bool with_variate, ConstantPrecision precision) {
  const OwnedTables owned = make_tables(cfg);
  const MultTables t = owned.view();
  InferenceOptions opt{cfg, with_variate, precision, false};
  std::vector<FilterConstants> consts;
  if (!t.exact) consts = filter_constants(cfg, layer.weights, layer.bias, layer.filter_size(), precision);
  std::vector<std::size_t> shape;
  auto acc = conv_impl(layer, input, t, t.exact ? nullptr : &consts, opt, shape, nullptr);
  return requantize_all(acc, std::move(shape), layer.requant, layer.output_quant);
}

std::vector<std::int64_t> reference_conv2d_accumulators(const Conv2DLayer& l, const QuantizedTensor& in,
                                                        std::vector<std::size_t>& out_shape) {
  out_shape = conv_out_shape(l, in);
  const std::size_t H = in.shape[0], W = in.shape[1], C = in.shape[2];
  const std::int64_t zw = l.weight_quant.zero_point, za = in.quant.zero_point;
  std::vector<std::int64_t> out(shape_size(out_shape));
  for (std::size_t oy = 0; oy < out_shape[0]; ++oy)
    for (std::size_t ox = 0; ox < out_shape[1]; ++ox)
      for (std::size_t f = 0; f < l.out_channels; ++f) {
        std::int64_t acc = l.bias[f];
        for (std::size_t ky = 0; ky < l.kernel_h; ++ky)
          for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
            const auto y = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - static_cast<std::ptrdiff_t>(l.padding);
            const auto x = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - static_cast<std::ptrdiff_t>(l.padding);
            if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(H) || x >= static_cast<std::ptrdiff_t>(W)) continue;
            for (std::size_t c = 0; c < C; ++c) {
              const std::int64_t w = l.weights[((f * l.kernel_h + ky) * l.kernel_w + kx) * C + c];
              const std::int64_t a = in.codes[(static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * C + c];
              acc += (w - zw) * (a - za);
            }
          }
        out[(oy * out_shape[1] + ox) * l.out_channels + f] = acc;
      }
  return out;
}

QuantizedTensor reference_conv2d(const Conv2DLayer& layer, const QuantizedTensor& input) {
  std::vector<std::size_t> shape;
  auto acc = reference_conv2d_accumulators(layer, input, shape);
  return requantize_all(acc, std::move(shape), layer.requant, layer.output_quant);
}

Logits reference_forward(const QuantizedModel& model, std::span<const std::uint8_t> image) {
  QuantizedTensor cur = make_input(model, image);
  for (const auto& layer : model.layers) {
    if (apply_simple(layer, cur)) continue;
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
      cur = reference_conv2d(*c, cur);
      continue;
    }
    const auto& d = std::get<DenseLayer>(layer);
    if (cur.codes.size() != d.in_features) throw ShapeError("layer '" + d.name + "': input size mismatch");
    std::vector<std::int64_t> acc(d.out_features);
    for (std::size_t o = 0; o < d.out_features; ++o) {
      std::int64_t s = d.bias[o];
      for (std::size_t i = 0; i < d.in_features; ++i) {
        s += (std::int64_t{d.weights[o * d.in_features + i]} - d.weight_quant.zero_point) *
             (std::int64_t{cur.codes[i]} - cur.quant.zero_point);
      }
      acc[o] = s;
    }
    if (d.logits) return acc;
    cur = requantize_all(acc, {d.out_features}, d.requant, d.output_quant);
  }
  return codes_as_logits(cur);
}

QuantizedTensor make_input(const QuantizedModel& model, std::span<const std::uint8_t> image) {
  if (image.size() != shape_size(model.input_shape)) {
    throw ShapeError("image has " + std::to_string(image.size()) + " values, model expects " +
                     std::to_string(shape_size(model.input_shape)));
  }
  return {model.input_shape, std::vector<std::uint8_t>(image.begin(), image.end()), model.input_quant};
}

std::size_t argmax(const Logits& logits) {
  if (logits.empty()) throw ShapeError("argmax of empty logits");
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

namespace {

void check_dataset(const QuantizedModel& model, const Dataset& ds) {
  if (ds.image_shape != model.input_shape) throw ShapeError("dataset image shape does not match model input");
  if (ds.size() == 0) throw ShapeError("dataset is empty");
}

void tally(EvalResult& r, std::size_t pred, std::uint8_t label) {
  r.predictions.push_back(static_cast<std::uint8_t>(pred));
  r.correct += pred == label;
  ++r.total;
}

}  // namespace

EvalResult evaluate(const QuantizedModel& model, const Dataset& dataset, const InferenceOptions& options,
                    bool collect_layer_error) {
  check_dataset(model, dataset);
  const InferenceEngine engine(model, options);
  EvalResult r;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    tally(r, argmax(engine.forward(dataset.image(i), collect_layer_error ? &r.per_layer : nullptr)),
          dataset.labels[i]);
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

EvalResult evaluate_reference(const QuantizedModel& model, const Dataset& dataset) {
  check_dataset(model, dataset);
  validate_model(model);
  EvalResult r;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    tally(r, argmax(reference_forward(model, dataset.image(i))), dataset.labels[i]);
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

}  // namespace axcv::nn
