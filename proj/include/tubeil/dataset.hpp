#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "tubeil/learn.hpp"

namespace tubeil {

/// Raw little-endian f32 streams (byte-swapped on big-endian hosts).
void write_f32_le(std::ostream& out, const float* data, std::size_t n);
void read_f32_le(std::istream& in, float* data, std::size_t n);

/// Writes <dir>/manifest.json and <dir>/samples.bin. Each record is
/// [image, other, ref, u, x] in that order.
void save_dataset(const std::string& dir, const Dataset& data, const std::string& config_hash,
                  const std::string& metadata_json = "{}");
/// Throws ConfigError on a config hash mismatch (unless expected_hash is
/// empty) and Error on missing or truncated files.
Dataset load_dataset(const std::string& dir, const std::string& expected_hash);

}  // namespace tubeil
