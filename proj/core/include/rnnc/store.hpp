#pragma once

// ============================================================================
// Model container serialization.
//
// Layout of a container file, all integers little-endian:
//
//   [0]  magic "RNC1" (4 bytes)
//   [4]  u32 format version
//   [8]  u64 metadata length
//   [16] UTF-8 JSON metadata (config, tensor manifest, vocabulary info)
//   ...  zero padding to an 8-byte boundary, then one blob per tensor:
//          u32 dtype tag (0 = f32, 1 = f64, 2 = quant8)
//          u32 ndim, u64 dims[ndim]
//          payload (+ min/scale f32 trailer for quant8), padded to 8 bytes
//   [-4] u32 CRC-32 over everything from offset 16 to the trailer
//
// Weights travel as f32 and are widened on load; quantized tensors keep
// their u8 codes. The vocabulary rides in a text sidecar at "<path>.vocab".
// Writes go to a temporary file first and rename into place, so a crash
// never leaves a half-written container at the destination.
// ============================================================================

#include <cstddef>
#include <cstdint>
#include <string>

#include "rnnc/compress.hpp"
#include "rnnc/model.hpp"

namespace rnnc {

inline constexpr std::uint32_t kStoreVersion = 1;

// Saves the model and its vocabulary sidecar; returns the container size in
// bytes. Loading the result and saving it again reproduces the same bytes.
std::size_t save_model(const LmModel& model, const std::string& path);

// Validates size, magic, version, and checksum in that order (MagicError,
// VersionError, ChecksumError) before touching the payload.
LmModel load_model(const std::string& path);

// Prune masks use the same container with their own metadata format tag.
std::size_t save_prune_set(const PruneSet& set, const std::string& path);
PruneSet load_prune_set(const std::string& path);

}  // namespace rnnc
