#include "wasmshade/binary.hpp"

namespace wasmshade {

namespace {

class Writer {
 public:
  std::vector<uint8_t> out;

  void byte(uint8_t b) { out.push_back(b); }

  void raw(std::span<const uint8_t> s) { out.insert(out.end(), s.begin(), s.end()); }

  void u32(uint32_t v) {
    do {
      uint8_t b = v & 0x7F;
      v >>= 7;
      if (v) b |= 0x80;
      out.push_back(b);
    } while (v);
  }

  void s64(int64_t v) {
    for (;;) {
      uint8_t b = v & 0x7F;
      v >>= 7;  // arithmetic shift
      bool done = (v == 0 && (b & 0x40) == 0) || (v == -1 && (b & 0x40) != 0);
      if (!done) b |= 0x80;
      out.push_back(b);
      if (done) return;
    }
  }

  void s32(int32_t v) { s64(v); }

  void f32_bits(uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
  }

  void f64_bits(uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xFF);
  }

  void name(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }

  void valtype(ValType t) { out.push_back(static_cast<uint8_t>(t)); }

  void limits(const Limits& l) {
    if (l.max) {
      byte(0x01);
      u32(l.min);
      u32(*l.max);
    } else {
      byte(0x00);
      u32(l.min);
    }
  }

  void instr(const Instruction& ins) {
    byte(static_cast<uint8_t>(ins.op));
    switch (imm_kind(ins.op)) {
      case ImmKind::None:
        break;
      case ImmKind::Block:
        byte(static_cast<uint8_t>(ins.imm[0]));
        break;
      case ImmKind::Label:
      case ImmKind::Func:
      case ImmKind::Local:
      case ImmKind::Global:
        u32(static_cast<uint32_t>(ins.imm[0]));
        break;
      case ImmKind::BrTable:
        u32(static_cast<uint32_t>(ins.imm.size() - 1));
        for (uint64_t v : ins.imm) u32(static_cast<uint32_t>(v));
        break;
      case ImmKind::CallInd:
        u32(static_cast<uint32_t>(ins.imm[0]));
        byte(static_cast<uint8_t>(ins.imm[1]));
        break;
      case ImmKind::Mem:
        u32(static_cast<uint32_t>(ins.imm[0]));
        u32(static_cast<uint32_t>(ins.imm[1]));
        break;
      case ImmKind::I32:
        s32(static_cast<int32_t>(ins.imm[0]));
        break;
      case ImmKind::I64:
        s64(static_cast<int64_t>(ins.imm[0]));
        break;
      case ImmKind::F32:
        f32_bits(static_cast<uint32_t>(ins.imm[0]));
        break;
      case ImmKind::F64:
        f64_bits(ins.imm[0]);
        break;
    }
  }

  void const_expr(const Instruction& ins) {
    instr(ins);
    byte(0x0B);
  }

  void section(uint8_t id, const Writer& payload) {
    byte(id);
    u32(static_cast<uint32_t>(payload.out.size()));
    raw(payload.out);
  }
};

}  // namespace

std::vector<uint8_t> encode_module(const Module& m) {
  static constexpr uint8_t header[8] = {0x00, 0x61, 0x73, 0x6D,
                                        0x01, 0x00, 0x00, 0x00};
  Writer w;
  w.raw(header);

  if (!m.types.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.types.size()));
    for (const auto& ft : m.types) {
      s.byte(0x60);
      s.u32(static_cast<uint32_t>(ft.params.size()));
      for (ValType t : ft.params) s.valtype(t);
      s.u32(static_cast<uint32_t>(ft.results.size()));
      for (ValType t : ft.results) s.valtype(t);
    }
    w.section(1, s);
  }

  if (!m.imports.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.imports.size()));
    for (const auto& im : m.imports) {
      s.name(im.module);
      s.name(im.field);
      s.byte(static_cast<uint8_t>(im.kind));
      switch (im.kind) {
        case ExternalKind::Func:
          s.u32(im.type_index);
          break;
        case ExternalKind::Table:
          s.byte(0x70);
          s.limits(im.limits);
          break;
        case ExternalKind::Memory:
          s.limits(im.limits);
          break;
        case ExternalKind::Global:
          s.valtype(im.global_type);
          s.byte(im.global_mutable ? 1 : 0);
          break;
      }
    }
    w.section(2, s);
  }

  if (!m.functions.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.functions.size()));
    for (const auto& f : m.functions) s.u32(f.type_index);
    w.section(3, s);
  }

  if (!m.tables.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.tables.size()));
    for (const auto& t : m.tables) {
      s.byte(0x70);
      s.limits(t.limits);
    }
    w.section(4, s);
  }

  if (!m.memories.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.memories.size()));
    for (const auto& mem : m.memories) s.limits(mem.limits);
    w.section(5, s);
  }

  if (!m.globals.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.globals.size()));
    for (const auto& g : m.globals) {
      s.valtype(g.type);
      s.byte(g.mut ? 1 : 0);
      s.const_expr(g.init);
    }
    w.section(6, s);
  }

  if (!m.exports.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.exports.size()));
    for (const auto& ex : m.exports) {
      s.name(ex.name);
      s.byte(static_cast<uint8_t>(ex.kind));
      s.u32(ex.index);
    }
    w.section(7, s);
  }

  if (m.start) {
    Writer s;
    s.u32(*m.start);
    w.section(8, s);
  }

  if (!m.elems.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.elems.size()));
    for (const auto& seg : m.elems) {
      s.u32(seg.table_index);
      s.const_expr(seg.offset);
      s.u32(static_cast<uint32_t>(seg.func_indices.size()));
      for (uint32_t fi : seg.func_indices) s.u32(fi);
    }
    w.section(9, s);
  }

  if (!m.functions.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.functions.size()));
    for (const auto& f : m.functions) {
      Writer body;
      // Locals re-compressed as runs of identical types.
      std::vector<std::pair<uint32_t, ValType>> runs;
      for (ValType t : f.locals) {
        if (!runs.empty() && runs.back().second == t)
          runs.back().first++;
        else
          runs.emplace_back(1, t);
      }
      body.u32(static_cast<uint32_t>(runs.size()));
      for (auto [count, t] : runs) {
        body.u32(count);
        body.valtype(t);
      }
      for (const auto& ins : f.body) body.instr(ins);
      s.u32(static_cast<uint32_t>(body.out.size()));
      s.raw(body.out);
    }
    w.section(10, s);
  }

  if (!m.datas.empty()) {
    Writer s;
    s.u32(static_cast<uint32_t>(m.datas.size()));
    for (const auto& seg : m.datas) {
      s.u32(seg.memory_index);
      s.const_expr(seg.offset);
      s.u32(static_cast<uint32_t>(seg.bytes.size()));
      s.raw(seg.bytes);
    }
    w.section(11, s);
  }

  for (const auto& cs : m.customs) {
    Writer s;
    s.name(cs.name);
    s.raw(cs.bytes);
    w.section(0, s);
  }

  return w.out;
}

}  // namespace wasmshade
