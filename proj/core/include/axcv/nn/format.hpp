#pragma once

// Model container and dataset files. Layouts are documented in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "axcv/nn/model.hpp"

namespace axcv::nn {

inline constexpr std::string_view kModelMagic = "AXCVMODL";
inline constexpr std::string_view kImagesMagic = "AXCVIMGS";
inline constexpr std::string_view kLabelsMagic = "AXCVLBLS";
inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

std::string sha256_hex(std::span<const std::uint8_t> bytes);

QuantizedModel parse_model(std::span<const std::uint8_t> bytes);
QuantizedModel load_model(const std::filesystem::path& path);

/// Writes tensors to the blob region in layer order (weights, then bias).
std::vector<std::uint8_t> serialize_model(const QuantizedModel& model);
void save_model(const QuantizedModel& model, const std::filesystem::path& path);

/// Byte range [offset, end) of the blob region inside a serialized model.
std::span<const std::uint8_t> model_blob_region(std::span<const std::uint8_t> bytes);

struct Dataset {
  std::vector<std::size_t> image_shape;  // H, W, C
  std::vector<std::uint8_t> images;      // count x H x W x C
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_bytes() const;
  std::span<const std::uint8_t> image(std::size_t i) const;
};

Dataset parse_dataset(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);
std::vector<std::uint8_t> serialize_images(const Dataset& ds);
std::vector<std::uint8_t> serialize_labels(const Dataset& ds);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace axcv::nn
