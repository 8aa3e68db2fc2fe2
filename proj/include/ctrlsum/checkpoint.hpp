#pragma once

// Portable checkpoint file:
//
//   bytes 0..7    ASCII magic "CSUMCKPT"
//   bytes 8..11   uint32 little-endian format version (1)
//   bytes 12..19  uint64 little-endian length L of the JSON header
//   next L bytes  UTF-8 JSON header; header["tensors"] lists {"name", "shape"}
//                 in storage order
//   remainder     every tensor's values as little-endian IEEE-754 float32,
//                 concatenated in header order
//
// Values are trained in double precision and narrowed to float32 on write.

#include <filesystem>
#include <nlohmann/json.hpp>

#include "ctrlsum/parameters.hpp"

namespace ctrlsum {

struct Checkpoint {
  nlohmann::json header;
  ParameterSet tensors;
};

void write_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                      const ParameterSet& tensors);

/// Throws MissingArtifactError if absent and Error if corrupt.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace ctrlsum
