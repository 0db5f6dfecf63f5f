#include "wasmshade/module.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wasmshade/binary.hpp"

namespace wasmshade {

std::string_view valtype_name(ValType t) {
  switch (t) {
    case ValType::I32: return "i32";
    case ValType::I64: return "i64";
    case ValType::F32: return "f32";
    case ValType::F64: return "f64";
  }
  return "?";
}

Instruction make_instr(Opcode op) { return Instruction{op, {}}; }
Instruction make_instr(Opcode op, uint64_t a) { return Instruction{op, {a}}; }
Instruction make_instr(Opcode op, uint64_t a, uint64_t b) {
  return Instruction{op, {a, b}};
}

Instruction i32_const(int32_t v) {
  return Instruction{Opcode::I32Const, {static_cast<uint64_t>(static_cast<int64_t>(v))}};
}

Instruction i64_const(int64_t v) {
  return Instruction{Opcode::I64Const, {static_cast<uint64_t>(v)}};
}

std::string instr_text(const Instruction& ins) {
  std::string out(mnemonic(ins.op));
  char buf[32];
  switch (imm_kind(ins.op)) {
    case ImmKind::None:
      break;
    case ImmKind::Block:
      // imm[0] is the raw blocktype byte: 0x40 empty, else a value type.
      if (ins.imm[0] != 0x40) {
        out += ' ';
        out += valtype_name(static_cast<ValType>(ins.imm[0]));
      }
      break;
    case ImmKind::Label:
    case ImmKind::Func:
    case ImmKind::Local:
    case ImmKind::Global:
      std::snprintf(buf, sizeof buf, " %" PRIu64, ins.imm[0]);
      out += buf;
      break;
    case ImmKind::BrTable:
      for (uint64_t v : ins.imm) {
        std::snprintf(buf, sizeof buf, " %" PRIu64, v);
        out += buf;
      }
      break;
    case ImmKind::CallInd:
    case ImmKind::Mem:
      std::snprintf(buf, sizeof buf, " %" PRIu64 " %" PRIu64, ins.imm[0],
                    ins.imm[1]);
      out += buf;
      break;
    case ImmKind::I32:
      std::snprintf(buf, sizeof buf, " %" PRId32, ins.i32());
      out += buf;
      break;
    case ImmKind::I64:
      std::snprintf(buf, sizeof buf, " %" PRId64, ins.i64());
      out += buf;
      break;
    case ImmKind::F32:
      // Bit pattern, not decimal: keeps the rendering exact and NaN-safe.
      std::snprintf(buf, sizeof buf, " 0x%08" PRIx64, ins.imm[0]);
      out += buf;
      break;
    case ImmKind::F64:
      std::snprintf(buf, sizeof buf, " 0x%016" PRIx64, ins.imm[0]);
      out += buf;
      break;
  }
  return out;
}

uint32_t Module::num_imported_funcs() const {
  uint32_t n = 0;
  for (const auto& im : imports)
    if (im.kind == ExternalKind::Func) ++n;
  return n;
}

uint32_t Module::num_imported_globals() const {
  uint32_t n = 0;
  for (const auto& im : imports)
    if (im.kind == ExternalKind::Global) ++n;
  return n;
}

uint32_t Module::num_funcs() const {
  return num_imported_funcs() + static_cast<uint32_t>(functions.size());
}

uint32_t Module::num_globals() const {
  return num_imported_globals() + static_cast<uint32_t>(globals.size());
}

bool Module::has_memory() const {
  if (!memories.empty()) return true;
  for (const auto& im : imports)
    if (im.kind == ExternalKind::Memory) return true;
  return false;
}

bool Module::has_table() const {
  if (!tables.empty()) return true;
  for (const auto& im : imports)
    if (im.kind == ExternalKind::Table) return true;
  return false;
}

const FuncType& Module::func_type(uint32_t func_index) const {
  uint32_t i = 0;
  for (const auto& im : imports) {
    if (im.kind != ExternalKind::Func) continue;
    if (i == func_index) return types.at(im.type_index);
    ++i;
  }
  return types.at(functions.at(func_index - i).type_index);
}

std::optional<uint32_t> Module::find_export(std::string_view name,
                                            ExternalKind kind) const {
  for (const auto& ex : exports)
    if (ex.kind == kind && ex.name == name) return ex.index;
  return std::nullopt;
}

InstrSeq extract_instruction_sequence(const Module& m) {
  InstrSeq seq;
  size_t total = 0;
  for (const auto& f : m.functions) total += f.body.size();
  seq.reserve(total);
  for (const auto& f : m.functions)
    seq.insert(seq.end(), f.body.begin(), f.body.end());
  return seq;
}

std::string text_dump(const Module& m) {
  std::ostringstream os;
  os << "module digest=" << hex64(module_digest(m)) << "\n";
  uint32_t base = m.num_imported_funcs();
  for (size_t fi = 0; fi < m.functions.size(); ++fi) {
    const auto& f = m.functions[fi];
    const auto& ty = m.types.at(f.type_index);
    os << "func " << (base + fi) << " (";
    for (size_t i = 0; i < ty.params.size(); ++i) {
      if (i) os << ' ';
      os << valtype_name(ty.params[i]);
    }
    os << ") -> (";
    for (size_t i = 0; i < ty.results.size(); ++i) {
      if (i) os << ' ';
      os << valtype_name(ty.results[i]);
    }
    os << ")";
    if (!f.locals.empty()) {
      os << " locals";
      for (ValType v : f.locals) os << ' ' << valtype_name(v);
    }
    os << "\n";
    int depth = 1;
    for (const auto& ins : f.body) {
      if (ins.op == Opcode::End || ins.op == Opcode::Else) depth--;
      for (int i = 0; i < depth; ++i) os << "  ";
      os << instr_text(ins) << "\n";
      if (ins.op == Opcode::Block || ins.op == Opcode::Loop ||
          ins.op == Opcode::If || ins.op == Opcode::Else)
        depth++;
    }
  }
  return os.str();
}

uint64_t module_digest(const Module& m) {
  auto bytes = encode_module(m);
  return fnv1a64(std::span<const uint8_t>(bytes));
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return std::string(buf);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::Io, "read failed for " + path);
  return data;
}

void write_file(const std::string& path, std::span<const uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

}  // namespace wasmshade
