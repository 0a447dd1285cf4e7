#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ircr/tensor.hpp"

namespace ircr::io {

// IRCR-T container:
//   "IRCR" | u8 version=1 | u8 dtype | u8 ndim | ndim x u32le dims | row-major payload (LE)
enum class DType : std::uint8_t { f64 = 0, i32 = 1, u8 = 2 };

inline constexpr std::uint8_t kTensorFormatVersion = 1;

/// Raw decoded container; payload is kept little-endian as stored.
struct TensorFile {
  DType dtype = DType::f64;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

void write_tensor_file(std::ostream& out, const TensorFile& file);
TensorFile read_tensor_file(std::istream& in);

std::vector<std::uint8_t> encode(const Tensor& t);
std::vector<std::uint8_t> encode(const InstanceLabelMap& labels);
std::vector<std::uint8_t> encode(const BinaryMask& mask);

Tensor decode_tensor(const TensorFile& file);
InstanceLabelMap decode_labels(const TensorFile& file);
BinaryMask decode_mask(const TensorFile& file);

// Path-based helpers throw std::runtime_error naming the file on failure.
void save(const std::filesystem::path& path, const Tensor& t);
void save(const std::filesystem::path& path, const InstanceLabelMap& labels);
void save(const std::filesystem::path& path, const BinaryMask& mask);

Tensor load_tensor(const std::filesystem::path& path);
InstanceLabelMap load_labels(const std::filesystem::path& path);
BinaryMask load_mask(const std::filesystem::path& path);

}  // namespace ircr::io
