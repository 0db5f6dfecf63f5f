#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace wasmshade {

enum class Opcode : uint8_t {
#define WS_OP(name, byte, mnemonic, imm) name = byte,
#include "wasmshade/opcodes.def"
#undef WS_OP
};

enum class ImmKind : uint8_t {
  None,
  Block,     // block type: empty or one value type
  Label,     // branch depth
  BrTable,   // n targets + default
  Func,      // function index
  CallInd,   // type index + table index
  Local,     // local index
  Global,    // global index
  Mem,       // align + offset
  I32,
  I64,
  F32,
  F64,
};

std::string_view mnemonic(Opcode op);
ImmKind imm_kind(Opcode op);

/// Opcode byte -> Opcode, or nullopt for bytes outside the supported subset.
std::optional<Opcode> opcode_from_byte(uint8_t byte);

/// Mnemonic -> Opcode (used by the fixture assembler and text tooling).
std::optional<Opcode> opcode_from_mnemonic(std::string_view m);

}  // namespace wasmshade
