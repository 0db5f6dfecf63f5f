#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wasmshade {

inline constexpr const char* kToolVersion = "0.1.0";

enum class ErrorCode {
  MalformedBinary,
  UnsupportedFeature,
  InvalidModule,
  UnboundImport,
  SegmentOutOfBounds,
  NoSuchExport,
  SignatureMismatch,
  SemanticsViolation,
  EmptySequence,
  EmptyInput,
  PairTooLarge,
  DegenerateCorpus,
  KindMismatch,
  ZeroBaseline,
  InvalidArgument,
  Io,
};

/// Base error for everything the library throws. `code` maps 1:1 onto the
/// C API status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure; `offset` is the byte offset into the input binary.
class BinaryError : public Error {
 public:
  BinaryError(ErrorCode code, size_t offset, const std::string& message)
      : Error(code, message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

inline BinaryError malformed(size_t offset, const std::string& msg) {
  return BinaryError(ErrorCode::MalformedBinary, offset, msg);
}

inline BinaryError unsupported(size_t offset, const std::string& msg) {
  return BinaryError(ErrorCode::UnsupportedFeature, offset, msg);
}

// FNV-1a, 64-bit. Used for instruction hashing, memory digests, and corpus
// digests; must stay byte-for-byte stable across platforms.
inline constexpr uint64_t kFnvOffsetBasis = 14695981039346656037ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a64(std::span<const uint8_t> data,
                        uint64_t state = kFnvOffsetBasis) {
  for (uint8_t b : data) {
    state ^= b;
    state *= kFnvPrime;
  }
  return state;
}

inline uint64_t fnv1a64(std::string_view text,
                        uint64_t state = kFnvOffsetBasis) {
  for (char c : text) {
    state ^= static_cast<uint8_t>(c);
    state *= kFnvPrime;
  }
  return state;
}

std::string hex64(uint64_t v);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> data);

}  // namespace wasmshade
