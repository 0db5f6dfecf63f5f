#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wasmshade/common.hpp"
#include "wasmshade/opcodes.hpp"

namespace wasmshade {

enum class ValType : uint8_t { I32 = 0x7F, I64 = 0x7E, F32 = 0x7D, F64 = 0x7C };

std::string_view valtype_name(ValType t);

struct FuncType {
  std::vector<ValType> params;
  std::vector<ValType> results;  // 0 or 1 entries (no multi-value)
  bool operator==(const FuncType&) const = default;
};

/// One instruction. Immediates are stored as raw 64-bit patterns:
/// i32/i64 constants sign-extended, f32/f64 constants as their bit patterns,
/// indices and memarg fields as plain unsigned values. br_table stores
/// [t0..tn-1, default].
struct Instruction {
  Opcode op;
  std::vector<uint64_t> imm;

  bool operator==(const Instruction&) const = default;

  int32_t i32() const { return static_cast<int32_t>(imm[0]); }
  int64_t i64() const { return static_cast<int64_t>(imm[0]); }
  uint32_t index() const { return static_cast<uint32_t>(imm[0]); }
};

Instruction make_instr(Opcode op);
Instruction make_instr(Opcode op, uint64_t a);
Instruction make_instr(Opcode op, uint64_t a, uint64_t b);
Instruction i32_const(int32_t v);
Instruction i64_const(int64_t v);

/// Canonical one-line rendering, `mnemonic imm...`. This is the text hashed
/// for similarity and emitted by the debug dump.
std::string instr_text(const Instruction& ins);

using InstrSeq = std::vector<Instruction>;

enum class ExternalKind : uint8_t { Func = 0, Table = 1, Memory = 2, Global = 3 };

struct Limits {
  uint32_t min = 0;
  std::optional<uint32_t> max;
  bool operator==(const Limits&) const = default;
};

struct Import {
  std::string module;
  std::string field;
  ExternalKind kind = ExternalKind::Func;
  // One of the following, depending on kind.
  uint32_t type_index = 0;        // Func
  Limits limits;                  // Table/Memory
  ValType global_type = ValType::I32;  // Global
  bool global_mutable = false;
  bool operator==(const Import&) const = default;
};

struct Function {
  uint32_t type_index = 0;
  std::vector<ValType> locals;  // expanded, one entry per local
  InstrSeq body;                // terminated by End
  bool operator==(const Function&) const = default;
};

struct Table {
  Limits limits;
  bool operator==(const Table&) const = default;
};

struct Memory {
  Limits limits;
  bool operator==(const Memory&) const = default;
};

struct Global {
  ValType type = ValType::I32;
  bool mut = false;
  Instruction init = {Opcode::I32Const, {0}};  // const or global.get
  bool operator==(const Global&) const = default;
};

struct Export {
  std::string name;
  ExternalKind kind = ExternalKind::Func;
  uint32_t index = 0;
  bool operator==(const Export&) const = default;
};

struct ElemSegment {
  uint32_t table_index = 0;
  Instruction offset = {Opcode::I32Const, {0}};
  std::vector<uint32_t> func_indices;
  bool operator==(const ElemSegment&) const = default;
};

struct DataSegment {
  uint32_t memory_index = 0;
  Instruction offset = {Opcode::I32Const, {0}};
  std::vector<uint8_t> bytes;
  bool operator==(const DataSegment&) const = default;
};

struct CustomSection {
  std::string name;
  std::vector<uint8_t> bytes;
  bool operator==(const CustomSection&) const = default;
};

/// In-memory model of a WebAssembly binary (version 1, core subset).
/// Value type: copyable, immutable by convention once built, comparable
/// structurally. Function index space is imports-first, then `functions`.
struct Module {
  std::vector<FuncType> types;
  std::vector<Import> imports;
  std::vector<Function> functions;
  std::vector<Table> tables;
  std::vector<Memory> memories;
  std::vector<Global> globals;
  std::vector<Export> exports;
  std::vector<ElemSegment> elems;
  std::vector<DataSegment> datas;
  std::vector<CustomSection> customs;
  std::optional<uint32_t> start;

  bool operator==(const Module&) const = default;

  uint32_t num_imported_funcs() const;
  uint32_t num_imported_globals() const;
  uint32_t num_funcs() const;    // imports + defined
  uint32_t num_globals() const;  // imports + defined
  bool has_memory() const;
  bool has_table() const;

  /// Signature of a function by absolute index (imports first).
  const FuncType& func_type(uint32_t func_index) const;

  std::optional<uint32_t> find_export(std::string_view name,
                                      ExternalKind kind) const;
};

/// Concatenation of all defined function bodies in index order.
InstrSeq extract_instruction_sequence(const Module& m);

/// Debug dump, one instruction per line with function headers. Not a
/// conformant .wat; intended for humans and diffing.
std::string text_dump(const Module& m);

/// FNV-1a-64 over the canonical encoding. Stable id for traces and reports.
uint64_t module_digest(const Module& m);

}  // namespace wasmshade
