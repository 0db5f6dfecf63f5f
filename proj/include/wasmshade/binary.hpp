#pragma once

#include <span>

#include "wasmshade/module.hpp"

namespace wasmshade {

/// Decode a `.wasm` binary into a Module.
///
/// Throws BinaryError with code MalformedBinary (bad magic/version, truncated
/// or overlong sections, bad LEB128, out-of-order sections) or
/// UnsupportedFeature (opcode or construct outside the 1.0 core subset);
/// both carry the byte offset of the failure. Unknown custom sections are
/// preserved verbatim; unknown non-custom section ids are an error.
Module parse_module(std::span<const uint8_t> bytes);

/// Encode a Module back to the binary format using canonical (minimal)
/// LEB128. parse_module(encode_module(m)) == m for every valid module.
/// Custom sections are emitted after the standard sections in list order.
std::vector<uint8_t> encode_module(const Module& m);

}  // namespace wasmshade
