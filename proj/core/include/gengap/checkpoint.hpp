#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gengap/model.hpp"

namespace gengap {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Binary checkpoint, all integers little-endian:
///   "GGAP" | u16 version
///   | u32 input_dim | u32 num_hidden | {u32 width, u8 activation}...
///   | u32 num_classes
///   | u32 len, procedure bytes | u32 k | u32 j | u64 run_id
///   | u64 param_count | f64 params...
std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes via a temporary file and rename.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace gengap
