#pragma once

// IDX dataset files (optionally gzip-compressed) and the SBNN model format.
//
// Model file, all integers little-endian:
//   "SBNN" | u32 version | u32 layers | u32 training mode | u32 T
//   per layer: u64 rows | u64 cols | rows * ceil(cols/64) u64 weight words
//              | rows f64 mu | rows f64 scale
//   u32 CRC-32 of every preceding byte

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbnn/dataset.hpp"
#include "sbnn/model.hpp"
#include "sbnn/training.hpp"

namespace sbnn {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kModelFormatVersion = 1;

// Whole file contents; gzip input is decompressed transparently.
Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_gzip_file(const std::string& path, std::span<const std::uint8_t> bytes);

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// IDX encodings of a dataset; pixels are rounded to the nearest of 0..255.
Bytes encode_idx_images(const Dataset& data);
Bytes encode_idx_labels(const Dataset& data);

Bytes save_model(const BnnModel& model);
BnnModel load_model(std::span<const std::uint8_t> bytes);
void save_model_file(const BnnModel& model, const std::string& path);
BnnModel load_model_file(const std::string& path);

// Real-valued training state (shadow weights, Adam moments, running stats)
// kept next to a model file so training can resume.
Bytes save_train_state(const TrainState& state);
TrainState load_train_state(std::span<const std::uint8_t> bytes);

}  // namespace sbnn
