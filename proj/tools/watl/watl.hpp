#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Tiny line-based assembler for the fixture corpus. Deliberately independent
// of the main library: it has its own LEB128 writer, section layout, and
// immediate encoding, so the corpus acts as an external check on the parser
// rather than a mirror of the encoder. Only the opcode byte table is shared
// (it is standard data, not logic).

namespace watl {

struct Assembled {
  std::string module_name;
  std::string label;  // "benign" | "miner" (from the `label` directive)
  std::vector<uint8_t> bytes;
};

/// Throws std::runtime_error with a line number on syntax errors.
Assembled assemble(const std::string& source);

}  // namespace watl
