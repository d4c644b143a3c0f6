#pragma once

// Binary CSI dataset file:
//
//   offset  size  field
//   0       4     magic "UWMM"
//   4       4     format version (u32 LE), currently 1
//   8       16    M, R, T, d (u32 LE each)
//   24      8     sample count (u64 LE)
//   32      ...   samples; each is M*M*R*T coefficients in row-major
//                 (i, j, r, t) order, stored as real then imaginary f64 LE

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uwmmse/channel.hpp"

namespace uwmmse::channel {

inline constexpr std::uint32_t kDatasetVersion = 1;

struct Dataset {
  std::size_t M = 0, R = 0, T = 0, d = 1;
  std::vector<CsiTensor> samples;
};

// Throws ShapeError when a sample's shape differs from the header.
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
// Throws FormatError (with byte offset) on bad magic, unsupported version,
// truncated header or payload, or trailing bytes.
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace uwmmse::channel
