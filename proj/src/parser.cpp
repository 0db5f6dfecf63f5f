#include <cstring>

#include "wasmshade/binary.hpp"

namespace wasmshade {

namespace {

constexpr uint8_t kMagic[4] = {0x00, 0x61, 0x73, 0x6D};
constexpr uint8_t kVersion[4] = {0x01, 0x00, 0x00, 0x00};

class Reader {
 public:
  Reader(std::span<const uint8_t> data, size_t base = 0)
      : data_(data), base_(base) {}

  size_t pos() const { return base_ + pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  uint8_t byte() {
    if (pos_ >= data_.size()) throw malformed(pos(), "unexpected end of input");
    return data_[pos_++];
  }

  std::span<const uint8_t> bytes(size_t n) {
    if (remaining() < n) throw malformed(pos(), "unexpected end of input");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  uint32_t u32() {
    uint64_t result = 0;
    int shift = 0;
    for (;;) {
      uint8_t b = byte();
      result |= uint64_t(b & 0x7F) << shift;
      if ((b & 0x80) == 0) {
        if (shift == 28 && (b & 0x70) != 0)
          throw malformed(pos() - 1, "u32 LEB128 out of range");
        return static_cast<uint32_t>(result);
      }
      shift += 7;
      if (shift >= 32) throw malformed(pos(), "u32 LEB128 too long");
    }
  }

  int32_t s32() { return static_cast<int32_t>(sleb(32)); }
  int64_t s64() { return sleb(64); }

  uint32_t f32_bits() {
    auto s = bytes(4);
    uint32_t v;
    std::memcpy(&v, s.data(), 4);
    return v;  // little-endian host assumed (checked at startup in tests)
  }

  uint64_t f64_bits() {
    auto s = bytes(8);
    uint64_t v;
    std::memcpy(&v, s.data(), 8);
    return v;
  }

  std::string name() {
    uint32_t n = length_checked("name");
    auto s = bytes(n);
    return std::string(reinterpret_cast<const char*>(s.data()), s.size());
  }

  /// A count that prefixes per-element payloads: each element takes at least
  /// one byte, so any count above `remaining` is malformed, not an OOM.
  uint32_t length_checked(const char* what) {
    size_t at = pos();
    uint32_t n = u32();
    if (n > remaining())
      throw malformed(at, std::string(what) + " count exceeds input size");
    return n;
  }

 private:
  int64_t sleb(int bits) {
    int64_t result = 0;
    int shift = 0;
    uint8_t b;
    do {
      b = byte();
      result |= int64_t(b & 0x7F) << shift;
      shift += 7;
      if (shift > bits + 6)
        throw malformed(pos(), "signed LEB128 too long");
    } while (b & 0x80);
    if (shift < 64 && (b & 0x40)) result |= -(int64_t(1) << shift);
    if (bits == 32) {
      int32_t narrow = static_cast<int32_t>(result);
      if (narrow != result) throw malformed(pos() - 1, "s32 LEB128 out of range");
    }
    return result;
  }

  std::span<const uint8_t> data_;
  size_t base_;
  size_t pos_ = 0;
};

ValType valtype(Reader& r) {
  size_t at = r.pos();
  uint8_t b = r.byte();
  switch (b) {
    case 0x7F: return ValType::I32;
    case 0x7E: return ValType::I64;
    case 0x7D: return ValType::F32;
    case 0x7C: return ValType::F64;
    case 0x7B: case 0x70: case 0x6F:
      throw unsupported(at, "value type outside the core 1.0 subset");
    default:
      throw malformed(at, "invalid value type byte");
  }
}

uint64_t blocktype(Reader& r) {
  size_t at = r.pos();
  uint8_t b = r.byte();
  switch (b) {
    case 0x40: case 0x7F: case 0x7E: case 0x7D: case 0x7C:
      return b;
    default:
      throw unsupported(at, "block type outside the core 1.0 subset");
  }
}

Limits limits(Reader& r) {
  size_t at = r.pos();
  uint8_t flag = r.byte();
  Limits l;
  switch (flag) {
    case 0x00:
      l.min = r.u32();
      break;
    case 0x01:
      l.min = r.u32();
      l.max = r.u32();
      break;
    case 0x02: case 0x03:
      throw unsupported(at, "shared limits require the threads proposal");
    default:
      throw malformed(at, "invalid limits flag");
  }
  return l;
}

Instruction instruction(Reader& r) {
  size_t at = r.pos();
  uint8_t b = r.byte();
  auto op = opcode_from_byte(b);
  if (!op) {
    char msg[48];
    std::snprintf(msg, sizeof msg, "opcode 0x%02X outside the 1.0 core subset",
                  b);
    throw unsupported(at, msg);
  }
  Instruction ins{*op, {}};
  switch (imm_kind(*op)) {
    case ImmKind::None:
      break;
    case ImmKind::Block:
      ins.imm.push_back(blocktype(r));
      break;
    case ImmKind::Label:
    case ImmKind::Func:
    case ImmKind::Local:
    case ImmKind::Global:
      ins.imm.push_back(r.u32());
      break;
    case ImmKind::BrTable: {
      uint32_t n = r.length_checked("br_table target");
      ins.imm.reserve(n + 1);
      for (uint32_t i = 0; i <= n; ++i) ins.imm.push_back(r.u32());
      break;
    }
    case ImmKind::CallInd: {
      uint32_t type_index = r.u32();
      size_t tat = r.pos();
      uint8_t table = r.byte();
      if (table != 0x00)
        throw unsupported(tat, "call_indirect table index must be 0");
      ins.imm = {type_index, table};
      break;
    }
    case ImmKind::Mem: {
      uint32_t align = r.u32();
      uint32_t offset = r.u32();
      ins.imm = {align, offset};
      break;
    }
    case ImmKind::I32:
      ins.imm.push_back(static_cast<uint64_t>(static_cast<int64_t>(r.s32())));
      break;
    case ImmKind::I64:
      ins.imm.push_back(static_cast<uint64_t>(r.s64()));
      break;
    case ImmKind::F32:
      ins.imm.push_back(r.f32_bits());
      break;
    case ImmKind::F64:
      ins.imm.push_back(r.f64_bits());
      break;
  }
  return ins;
}

/// Instructions up to and including the End that closes the implicit
/// outermost block. The returned sequence includes every `end`.
InstrSeq expression(Reader& r) {
  InstrSeq seq;
  int depth = 1;
  for (;;) {
    Instruction ins = instruction(r);
    switch (ins.op) {
      case Opcode::Block:
      case Opcode::Loop:
      case Opcode::If:
        depth++;
        break;
      case Opcode::End:
        depth--;
        break;
      default:
        break;
    }
    seq.push_back(std::move(ins));
    if (depth == 0) return seq;
  }
}

/// Constant expression: exactly one instruction plus End.
Instruction const_expr(Reader& r, const char* what) {
  size_t at = r.pos();
  InstrSeq seq = expression(r);
  if (seq.size() != 2)
    throw malformed(at, std::string(what) +
                            " must be a single-instruction constant expression");
  switch (seq[0].op) {
    case Opcode::I32Const:
    case Opcode::I64Const:
    case Opcode::F32Const:
    case Opcode::F64Const:
    case Opcode::GlobalGet:
      return seq[0];
    default:
      throw malformed(at, std::string(what) + " has a non-constant opcode");
  }
}

void type_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("type");
  m.types.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    size_t at = r.pos();
    if (r.byte() != 0x60) throw malformed(at, "type is not a function type");
    FuncType ft;
    uint32_t np = r.length_checked("param");
    ft.params.reserve(np);
    for (uint32_t j = 0; j < np; ++j) ft.params.push_back(valtype(r));
    uint32_t nr = r.length_checked("result");
    if (nr > 1)
      throw unsupported(r.pos(), "multi-value results are not in the subset");
    for (uint32_t j = 0; j < nr; ++j) ft.results.push_back(valtype(r));
    m.types.push_back(std::move(ft));
  }
}

void import_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("import");
  m.imports.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Import im;
    im.module = r.name();
    im.field = r.name();
    size_t at = r.pos();
    uint8_t kind = r.byte();
    switch (kind) {
      case 0x00:
        im.kind = ExternalKind::Func;
        im.type_index = r.u32();
        break;
      case 0x01: {
        im.kind = ExternalKind::Table;
        size_t tat = r.pos();
        if (r.byte() != 0x70) throw malformed(tat, "table element type must be funcref");
        im.limits = limits(r);
        break;
      }
      case 0x02:
        im.kind = ExternalKind::Memory;
        im.limits = limits(r);
        break;
      case 0x03: {
        im.kind = ExternalKind::Global;
        im.global_type = valtype(r);
        size_t gat = r.pos();
        uint8_t mut = r.byte();
        if (mut > 1) throw malformed(gat, "invalid global mutability flag");
        im.global_mutable = mut == 1;
        break;
      }
      default:
        throw malformed(at, "invalid import kind");
    }
    m.imports.push_back(std::move(im));
  }
}

std::vector<uint32_t> function_section(Reader& r) {
  uint32_t n = r.length_checked("function");
  std::vector<uint32_t> type_indices;
  type_indices.reserve(n);
  for (uint32_t i = 0; i < n; ++i) type_indices.push_back(r.u32());
  return type_indices;
}

void table_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("table");
  for (uint32_t i = 0; i < n; ++i) {
    size_t at = r.pos();
    if (r.byte() != 0x70) throw malformed(at, "table element type must be funcref");
    m.tables.push_back(Table{limits(r)});
  }
}

void memory_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("memory");
  for (uint32_t i = 0; i < n; ++i) m.memories.push_back(Memory{limits(r)});
}

void global_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("global");
  m.globals.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Global g;
    g.type = valtype(r);
    size_t at = r.pos();
    uint8_t mut = r.byte();
    if (mut > 1) throw malformed(at, "invalid global mutability flag");
    g.mut = mut == 1;
    g.init = const_expr(r, "global initializer");
    m.globals.push_back(std::move(g));
  }
}

void export_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("export");
  m.exports.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Export ex;
    ex.name = r.name();
    size_t at = r.pos();
    uint8_t kind = r.byte();
    if (kind > 3) throw malformed(at, "invalid export kind");
    ex.kind = static_cast<ExternalKind>(kind);
    ex.index = r.u32();
    m.exports.push_back(std::move(ex));
  }
}

void elem_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("element segment");
  m.elems.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    ElemSegment seg;
    seg.table_index = r.u32();
    seg.offset = const_expr(r, "element offset");
    uint32_t nf = r.length_checked("element function");
    seg.func_indices.reserve(nf);
    for (uint32_t j = 0; j < nf; ++j) seg.func_indices.push_back(r.u32());
    m.elems.push_back(std::move(seg));
  }
}

void code_section(Reader& r, Module& m,
                  const std::vector<uint32_t>& type_indices) {
  uint32_t n = r.length_checked("code");
  if (n != type_indices.size())
    throw malformed(r.pos(),
                    "code entry count does not match function section");
  m.functions.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    size_t size_at = r.pos();
    uint32_t body_size = r.u32();
    if (body_size > r.remaining())
      throw malformed(size_at, "code entry size exceeds input size");
    size_t end_pos = r.pos() + body_size;

    Function f;
    f.type_index = type_indices[i];
    uint32_t nlocals = r.length_checked("local declaration");
    uint64_t total_locals = 0;
    for (uint32_t j = 0; j < nlocals; ++j) {
      uint32_t count = r.u32();
      total_locals += count;
      if (total_locals > 100000)
        throw malformed(r.pos(), "too many locals");
      ValType t = valtype(r);
      f.locals.insert(f.locals.end(), count, t);
    }
    f.body = expression(r);
    if (r.pos() != end_pos)
      throw malformed(r.pos(), "code entry size mismatch");
    m.functions.push_back(std::move(f));
  }
}

void data_section(Reader& r, Module& m) {
  uint32_t n = r.length_checked("data segment");
  m.datas.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    DataSegment seg;
    seg.memory_index = r.u32();
    seg.offset = const_expr(r, "data offset");
    uint32_t nb = r.length_checked("data byte");
    auto s = r.bytes(nb);
    seg.bytes.assign(s.begin(), s.end());
    m.datas.push_back(std::move(seg));
  }
}

}  // namespace

Module parse_module(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw malformed(0, "missing \\0asm magic");
  if (std::memcmp(bytes.data() + 4, kVersion, 4) != 0)
    throw malformed(4, "unsupported binary version (want 1)");
  r.bytes(8);

  Module m;
  std::vector<uint32_t> func_type_indices;
  bool saw_code = false;
  int last_id = 0;
  while (!r.done()) {
    size_t id_at = r.pos();
    uint8_t id = r.byte();
    uint32_t size = r.u32();
    if (size > r.remaining())
      throw malformed(id_at, "section size exceeds input size");
    auto payload = r.bytes(size);
    Reader section(payload, r.pos() - size);

    if (id != 0) {
      if (id > 11) throw malformed(id_at, "unknown section id");
      if (id <= last_id)
        throw malformed(id_at, "section out of order or duplicated");
      last_id = id;
    }

    switch (id) {
      case 0: {
        CustomSection cs;
        cs.name = section.name();
        auto rest = section.bytes(section.remaining());
        cs.bytes.assign(rest.begin(), rest.end());
        m.customs.push_back(std::move(cs));
        break;
      }
      case 1: type_section(section, m); break;
      case 2: import_section(section, m); break;
      case 3: func_type_indices = function_section(section); break;
      case 4: table_section(section, m); break;
      case 5: memory_section(section, m); break;
      case 6: global_section(section, m); break;
      case 7: export_section(section, m); break;
      case 8: m.start = section.u32(); break;
      case 9: elem_section(section, m); break;
      case 10:
        code_section(section, m, func_type_indices);
        saw_code = true;
        break;
      case 11: data_section(section, m); break;
    }
    if (!section.done())
      throw malformed(section.pos(), "trailing bytes in section");
  }
  if (!func_type_indices.empty() && !saw_code)
    throw malformed(bytes.size(), "function section without code section");
  return m;
}

}  // namespace wasmshade
