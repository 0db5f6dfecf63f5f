#include "wasmshade/opcodes.hpp"

#include <array>
#include <unordered_map>

namespace wasmshade {

namespace {

struct OpInfo {
  std::string_view name;
  ImmKind imm;
  bool valid = false;
};

constexpr std::array<OpInfo, 256> build_table() {
  std::array<OpInfo, 256> t{};
#define WS_OP(name_, byte_, mnemonic_, imm_) \
  t[byte_] = OpInfo{mnemonic_, ImmKind::imm_, true};
#include "wasmshade/opcodes.def"
#undef WS_OP
  return t;
}

constexpr auto kTable = build_table();

const std::unordered_map<std::string_view, Opcode>& mnemonic_map() {
  static const auto* map = [] {
    auto* m = new std::unordered_map<std::string_view, Opcode>();
    for (int b = 0; b < 256; ++b) {
      if (kTable[b].valid) m->emplace(kTable[b].name, static_cast<Opcode>(b));
    }
    return m;
  }();
  return *map;
}

}  // namespace

std::string_view mnemonic(Opcode op) {
  return kTable[static_cast<uint8_t>(op)].name;
}

ImmKind imm_kind(Opcode op) { return kTable[static_cast<uint8_t>(op)].imm; }

std::optional<Opcode> opcode_from_byte(uint8_t byte) {
  if (!kTable[byte].valid) return std::nullopt;
  return static_cast<Opcode>(byte);
}

std::optional<Opcode> opcode_from_mnemonic(std::string_view m) {
  const auto& map = mnemonic_map();
  auto it = map.find(m);
  if (it == map.end()) return std::nullopt;
  return it->second;
}

}  // namespace wasmshade
