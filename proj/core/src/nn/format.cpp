#include "axcv/nn/format.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "axcv/error.hpp"
#include "json.hpp"

namespace axcv::nn {

using nlohmann::json;

namespace {

constexpr std::size_t kModelHeaderBytes = 16;  // magic, version, manifest length

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  if (at + 4 > bytes.size()) throw FormatError("unexpected end of file", bytes.size());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[at + i]} << (8 * i);
  return v;
}

void check_magic(std::span<const std::uint8_t> bytes, std::string_view magic, const char* what) {
  if (bytes.size() < magic.size()) throw FormatError(std::string(what) + ": file too short for magic", bytes.size());
  if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw FormatError(std::string(what) + ": bad magic, expected " + std::string(magic), 0);
  }
}

void put_magic(std::vector<std::uint8_t>& out, std::string_view magic) {
  out.insert(out.end(), magic.begin(), magic.end());
}

// --- manifest decoding -------------------------------------------------------

struct BlobView {
  std::span<const std::uint8_t> blobs;
  std::size_t base;  // absolute file offset of the blob region
};

template <class T>
T field(const json& j, const char* key, std::size_t at) {
  if (!j.contains(key)) throw FormatError(std::string("manifest: missing field '") + key + "'", at);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: field '") + key + "': " + e.what(), at);
  }
}

std::size_t dtype_size(const std::string& dtype, std::size_t at) {
  if (dtype == "uint8") return 1;
  if (dtype == "int32le") return 4;
  throw FormatError("manifest: unsupported dtype '" + dtype + "'", at);
}

std::pair<std::size_t, std::size_t> tensor_range(const json& ref, const BlobView& view, const std::string& dtype,
                                                 std::size_t count, std::size_t at) {
  const auto off = field<std::size_t>(ref, "offset", at);
  const auto len = field<std::size_t>(ref, "length", at);
  const auto type = field<std::string>(ref, "dtype", at);
  const auto shape = field<std::vector<std::size_t>>(ref, "shape", at);
  if (type != dtype) throw FormatError("manifest: expected dtype " + dtype + ", got " + type, at);
  if (shape_size(shape) != count) throw FormatError("manifest: tensor shape does not match layer geometry", at);
  if (len != count * dtype_size(type, at)) throw FormatError("manifest: tensor length does not match shape", at);
  if (off > view.blobs.size() || len > view.blobs.size() - off) {
    throw FormatError("tensor extends past end of blob region", view.base + view.blobs.size());
  }
  return {off, len};
}

std::vector<std::uint8_t> read_u8(const json& ref, const BlobView& view, std::size_t count, std::size_t at) {
  const auto [off, len] = tensor_range(ref, view, "uint8", count, at);
  return {view.blobs.begin() + static_cast<std::ptrdiff_t>(off),
          view.blobs.begin() + static_cast<std::ptrdiff_t>(off + len)};
}

std::vector<std::int32_t> read_i32(const json& ref, const BlobView& view, std::size_t count, std::size_t at) {
  const auto [off, len] = tensor_range(ref, view, "int32le", count, at);
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::int32_t>(get_u32(view.blobs, off + 4 * i));
  }
  return out;
}

QuantParams read_quant(const json& j, std::size_t at) {
  QuantParams q;
  q.scale = field<double>(j, "scale", at);
  q.zero_point = field<std::int32_t>(j, "zero_point", at);
  if (!(q.scale > 0.0)) throw FormatError("manifest: quantization scale must be positive", at);
  if (q.zero_point < 0 || q.zero_point > 255) throw FormatError("manifest: zero point outside [0, 255]", at);
  return q;
}

Requant read_requant(const json& j, std::size_t at) {
  Requant r;
  r.multiplier = field<std::int64_t>(j, "multiplier", at);
  r.shift = field<int>(j, "shift", at);
  if (r.shift < 0 || r.shift > 62) throw FormatError("manifest: requant shift outside [0, 62]", at);
  return r;
}

Layer read_layer(const json& j, const BlobView& view, std::size_t at) {
  const auto type = field<std::string>(j, "type", at);
  const std::string name = j.value("name", type);
  if (type == "conv2d") {
    Conv2DLayer l;
    l.name = name;
    const auto kernel = field<std::vector<std::size_t>>(j, "kernel", at);
    if (kernel.size() != 2) throw FormatError("manifest: conv2d kernel must be [h, w]", at);
    l.kernel_h = kernel[0];
    l.kernel_w = kernel[1];
    l.in_channels = field<std::size_t>(j, "in_channels", at);
    l.out_channels = field<std::size_t>(j, "out_channels", at);
    l.stride = j.value("stride", std::size_t{1});
    l.padding = j.value("padding", std::size_t{0});
    l.weights = read_u8(field<json>(j, "weights", at), view, l.out_channels * l.filter_size(), at);
    l.bias = read_i32(field<json>(j, "bias", at), view, l.out_channels, at);
    l.weight_quant = read_quant(field<json>(j, "weight_quant", at), at);
    l.output_quant = read_quant(field<json>(j, "output_quant", at), at);
    l.requant = read_requant(field<json>(j, "requant", at), at);
    return l;
  }
  if (type == "dense") {
    DenseLayer l;
    l.name = name;
    l.in_features = field<std::size_t>(j, "in_features", at);
    l.out_features = field<std::size_t>(j, "out_features", at);
    l.weights = read_u8(field<json>(j, "weights", at), view, l.in_features * l.out_features, at);
    l.bias = read_i32(field<json>(j, "bias", at), view, l.out_features, at);
    l.weight_quant = read_quant(field<json>(j, "weight_quant", at), at);
    l.logits = j.value("output", std::string("codes")) == "logits";
    if (!l.logits) {
      l.output_quant = read_quant(field<json>(j, "output_quant", at), at);
      l.requant = read_requant(field<json>(j, "requant", at), at);
    }
    return l;
  }
  if (type == "relu") return ReluLayer{name};
  if (type == "maxpool") return MaxPoolLayer{name, j.value("size", std::size_t{2}), j.value("stride", std::size_t{2})};
  if (type == "avgpool") return AvgPoolLayer{name, j.value("size", std::size_t{2}), j.value("stride", std::size_t{2})};
  if (type == "flatten") return FlattenLayer{name};
  throw FormatError("manifest: unknown layer type '" + type + "'", at);
}

// --- manifest encoding -------------------------------------------------------

json quant_json(const QuantParams& q) { return {{"scale", q.scale}, {"zero_point", q.zero_point}}; }

json tensor_ref(std::vector<std::uint8_t>& blobs, std::span<const std::uint8_t> data, const char* dtype,
                std::vector<std::size_t> shape) {
  json ref = {{"offset", blobs.size()}, {"length", data.size()}, {"dtype", dtype}, {"shape", shape}};
  blobs.insert(blobs.end(), data.begin(), data.end());
  return ref;
}

json i32_ref(std::vector<std::uint8_t>& blobs, const std::vector<std::int32_t>& v) {
  std::vector<std::uint8_t> raw;
  raw.reserve(v.size() * 4);
  for (auto x : v) put_u32(raw, static_cast<std::uint32_t>(x));
  return tensor_ref(blobs, raw, "int32le", {v.size()});
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::span<const std::uint8_t> model_blob_region(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kModelMagic, "model");
  if (bytes.size() < kModelHeaderBytes) throw FormatError("model: truncated header", bytes.size());
  const std::uint32_t mlen = get_u32(bytes, 12);
  if (mlen > bytes.size() - kModelHeaderBytes) throw FormatError("model: manifest extends past end of file", bytes.size());
  return bytes.subspan(kModelHeaderBytes + mlen);
}

QuantizedModel parse_model(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kModelMagic, "model");
  if (bytes.size() < kModelHeaderBytes) throw FormatError("model: truncated header", bytes.size());
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kModelFormatVersion) {
    throw FormatError("model: unsupported format version " + std::to_string(version), 8);
  }
  const std::uint32_t mlen = get_u32(bytes, 12);
  if (mlen > bytes.size() - kModelHeaderBytes) {
    throw FormatError("model: manifest extends past end of file", bytes.size());
  }
  const auto mbytes = bytes.subspan(kModelHeaderBytes, mlen);
  json manifest;
  try {
    manifest = json::parse(mbytes.begin(), mbytes.end());
  } catch (const json::parse_error& e) {
    const std::size_t pos = e.byte > 0 ? e.byte - 1 : 0;
    throw FormatError(std::string("model: manifest is not valid JSON: ") + e.what(), kModelHeaderBytes + pos);
  }
  const std::size_t at = kModelHeaderBytes;
  if (!manifest.is_object()) throw FormatError("model: manifest must be a JSON object", at);

  const BlobView view{bytes.subspan(kModelHeaderBytes + mlen), kModelHeaderBytes + mlen};
  const auto blob_bytes = field<std::size_t>(manifest, "blob_bytes", at);
  if (view.blobs.size() < blob_bytes) {
    throw FormatError("model: blob region truncated, expected " + std::to_string(blob_bytes) + " bytes",
                      bytes.size());
  }
  if (view.blobs.size() > blob_bytes) {
    throw FormatError("model: trailing bytes after blob region", view.base + blob_bytes);
  }

  QuantizedModel model;
  model.format_version = version;
  model.name = manifest.value("name", std::string{});
  const auto checksum = field<json>(manifest, "checksum", at);
  if (field<std::string>(checksum, "algorithm", at) != "sha256") {
    throw FormatError("model: unsupported checksum algorithm", at);
  }
  model.checksum = field<std::string>(checksum, "value", at);
  const std::string actual = sha256_hex(view.blobs);
  if (actual != model.checksum) {
    throw FormatError("model: checksum mismatch, manifest " + model.checksum + ", blobs " + actual, view.base);
  }

  const auto input = field<json>(manifest, "input", at);
  model.input_shape = field<std::vector<std::size_t>>(input, "shape", at);
  model.input_quant = read_quant(input, at);
  model.num_classes = field<std::size_t>(manifest, "num_classes", at);
  if (manifest.contains("reference_accuracy") && !manifest["reference_accuracy"].is_null()) {
    model.reference_accuracy = field<double>(manifest, "reference_accuracy", at);
  }
  if (manifest.contains("metadata")) {
    for (const auto& [k, v] : manifest["metadata"].items()) {
      model.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  const auto layers = field<json>(manifest, "layers", at);
  if (!layers.is_array()) throw FormatError("model: 'layers' must be an array", at);
  for (const auto& lj : layers) model.layers.push_back(read_layer(lj, view, at));

  try {
    validate_model(model);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("model: inconsistent layer shapes: ") + e.what(), at);
  }
  return model;
}

std::vector<std::uint8_t> serialize_model(const QuantizedModel& model) {
  validate_model(model);
  std::vector<std::uint8_t> blobs;
  json layers = json::array();
  for (const auto& layer : model.layers) {
    json j = {{"type", layer_type(layer)}, {"name", layer_name(layer)}};
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
      j["kernel"] = {c->kernel_h, c->kernel_w};
      j["in_channels"] = c->in_channels;
      j["out_channels"] = c->out_channels;
      j["stride"] = c->stride;
      j["padding"] = c->padding;
      j["weights"] = tensor_ref(blobs, c->weights, "uint8", {c->out_channels, c->kernel_h, c->kernel_w, c->in_channels});
      j["bias"] = i32_ref(blobs, c->bias);
      j["weight_quant"] = quant_json(c->weight_quant);
      j["output_quant"] = quant_json(c->output_quant);
      j["requant"] = {{"multiplier", c->requant.multiplier}, {"shift", c->requant.shift}};
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      j["in_features"] = d->in_features;
      j["out_features"] = d->out_features;
      j["weights"] = tensor_ref(blobs, d->weights, "uint8", {d->out_features, d->in_features});
      j["bias"] = i32_ref(blobs, d->bias);
      j["weight_quant"] = quant_json(d->weight_quant);
      j["output"] = d->logits ? "logits" : "codes";
      if (!d->logits) {
        j["output_quant"] = quant_json(d->output_quant);
        j["requant"] = {{"multiplier", d->requant.multiplier}, {"shift", d->requant.shift}};
      }
    } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
      j["size"] = p->size;
      j["stride"] = p->stride;
    } else if (const auto* a = std::get_if<AvgPoolLayer>(&layer)) {
      j["size"] = a->size;
      j["stride"] = a->stride;
    }
    layers.push_back(std::move(j));
  }
  json manifest = {
      {"format", "axcv-model"},
      {"version", kModelFormatVersion},
      {"name", model.name},
      {"input", {{"shape", model.input_shape}, {"scale", model.input_quant.scale}, {"zero_point", model.input_quant.zero_point}}},
      {"num_classes", model.num_classes},
      {"blob_bytes", blobs.size()},
      {"checksum", {{"algorithm", "sha256"}, {"value", sha256_hex(blobs)}}},
      {"layers", layers},
  };
  if (model.reference_accuracy) manifest["reference_accuracy"] = *model.reference_accuracy;
  if (!model.metadata.empty()) manifest["metadata"] = model.metadata;

  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out;
  put_magic(out, kModelMagic);
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

QuantizedModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

void save_model(const QuantizedModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

// --- dataset -------------------------------------------------------------------

std::size_t Dataset::image_bytes() const { return shape_size(image_shape); }

std::span<const std::uint8_t> Dataset::image(std::size_t i) const {
  if (i >= size()) throw ShapeError("image index " + std::to_string(i) + " out of range");
  const std::size_t n = image_bytes();
  return std::span<const std::uint8_t>(images).subspan(i * n, n);
}

Dataset parse_dataset(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  check_magic(images, kImagesMagic, "images");
  check_magic(labels, kLabelsMagic, "labels");
  if (get_u32(images, 8) != kDatasetFormatVersion) throw FormatError("images: unsupported version", 8);
  if (get_u32(labels, 8) != kDatasetFormatVersion) throw FormatError("labels: unsupported version", 8);

  Dataset ds;
  const std::uint32_t count = get_u32(images, 12);
  const std::uint32_t rank = get_u32(images, 16);
  if (rank != 3) throw FormatError("images: rank must be 3 (H, W, C)", 16);
  for (std::uint32_t r = 0; r < rank; ++r) {
    ds.image_shape.push_back(get_u32(images, 20 + 4 * r));
    if (ds.image_shape.back() == 0) throw FormatError("images: zero dimension", 20 + 4 * r);
  }
  const std::size_t header = 20 + 4 * rank;
  const std::size_t need = static_cast<std::size_t>(count) * ds.image_bytes();
  if (images.size() - header < need) throw FormatError("images: pixel data truncated", images.size());
  if (images.size() - header > need) throw FormatError("images: trailing bytes", header + need);
  ds.images.assign(images.begin() + static_cast<std::ptrdiff_t>(header), images.end());

  const std::uint32_t lcount = get_u32(labels, 12);
  if (lcount != count) {
    throw FormatError("labels: count " + std::to_string(lcount) + " does not match image count " +
                          std::to_string(count), 12);
  }
  if (labels.size() - 16 < lcount) throw FormatError("labels: data truncated", labels.size());
  if (labels.size() - 16 > lcount) throw FormatError("labels: trailing bytes", 16 + lcount);
  ds.labels.assign(labels.begin() + 16, labels.end());
  return ds;
}

Dataset load_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  return parse_dataset(read_file(images), read_file(labels));
}

std::vector<std::uint8_t> serialize_images(const Dataset& ds) {
  if (ds.image_shape.size() != 3) throw ShapeError("dataset image shape must be H x W x C");
  if (ds.images.size() != ds.size() * ds.image_bytes()) throw ShapeError("image data does not match label count");
  std::vector<std::uint8_t> out;
  put_magic(out, kImagesMagic);
  put_u32(out, kDatasetFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(ds.size()));
  put_u32(out, 3);
  for (auto d : ds.image_shape) put_u32(out, static_cast<std::uint32_t>(d));
  out.insert(out.end(), ds.images.begin(), ds.images.end());
  return out;
}

std::vector<std::uint8_t> serialize_labels(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  put_magic(out, kLabelsMagic);
  put_u32(out, kDatasetFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(ds.size()));
  out.insert(out.end(), ds.labels.begin(), ds.labels.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace axcv::nn
