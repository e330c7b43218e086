#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pixelmap {

// Bad layer/model/run configuration (wrong channel counts, invalid ranges).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid call fed unusable data (empty mask, label out of range,
// nonpositive depth at a valid pixel).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed serialized payload. Carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
  FormatError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset = 0;
};

// Filesystem-level failure (missing file, short write).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training aborted on a numerical fault (non-finite loss or gradient).
struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pixelmap
