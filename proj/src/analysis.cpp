#include "wasmshade/analysis.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace wasmshade {

namespace {

// Operand with the polymorphic "unknown" produced after `unreachable`.
using Opd = std::optional<ValType>;

struct Ctrl {
  Opcode opener = Opcode::End;  // Block/Loop/If/Else; End = function frame
  uint32_t open_at = UINT32_MAX;
  std::vector<ValType> end_types;
  size_t height = 0;
  bool dead = false;
};

struct MemOp {
  ValType type;
  uint32_t width;  // bytes accessed
  bool is_store;
};

std::optional<MemOp> mem_op(Opcode op) {
  switch (op) {
    case Opcode::I32Load: return MemOp{ValType::I32, 4, false};
    case Opcode::I64Load: return MemOp{ValType::I64, 8, false};
    case Opcode::F32Load: return MemOp{ValType::F32, 4, false};
    case Opcode::F64Load: return MemOp{ValType::F64, 8, false};
    case Opcode::I32Load8S: case Opcode::I32Load8U:
      return MemOp{ValType::I32, 1, false};
    case Opcode::I32Load16S: case Opcode::I32Load16U:
      return MemOp{ValType::I32, 2, false};
    case Opcode::I64Load8S: case Opcode::I64Load8U:
      return MemOp{ValType::I64, 1, false};
    case Opcode::I64Load16S: case Opcode::I64Load16U:
      return MemOp{ValType::I64, 2, false};
    case Opcode::I64Load32S: case Opcode::I64Load32U:
      return MemOp{ValType::I64, 4, false};
    case Opcode::I32Store: return MemOp{ValType::I32, 4, true};
    case Opcode::I64Store: return MemOp{ValType::I64, 8, true};
    case Opcode::F32Store: return MemOp{ValType::F32, 4, true};
    case Opcode::F64Store: return MemOp{ValType::F64, 8, true};
    case Opcode::I32Store8: return MemOp{ValType::I32, 1, true};
    case Opcode::I32Store16: return MemOp{ValType::I32, 2, true};
    case Opcode::I64Store8: return MemOp{ValType::I64, 1, true};
    case Opcode::I64Store16: return MemOp{ValType::I64, 2, true};
    case Opcode::I64Store32: return MemOp{ValType::I64, 4, true};
    default: return std::nullopt;
  }
}

// Fixed [ins...] -> [out] signatures of the numeric/conversion opcodes.
bool numeric_signature(Opcode op, std::vector<ValType>& in, ValType& out) {
  uint8_t b = static_cast<uint8_t>(op);
  auto sig = [&](std::initializer_list<ValType> i, ValType o) {
    in.assign(i);
    out = o;
    return true;
  };
  const ValType i32 = ValType::I32, i64 = ValType::I64, f32 = ValType::F32,
                f64 = ValType::F64;
  if (op == Opcode::I32Eqz) return sig({i32}, i32);
  if (b >= 0x46 && b <= 0x4F) return sig({i32, i32}, i32);
  if (op == Opcode::I64Eqz) return sig({i64}, i32);
  if (b >= 0x51 && b <= 0x5A) return sig({i64, i64}, i32);
  if (b >= 0x5B && b <= 0x60) return sig({f32, f32}, i32);
  if (b >= 0x61 && b <= 0x66) return sig({f64, f64}, i32);
  if (b >= 0x67 && b <= 0x69) return sig({i32}, i32);
  if (b >= 0x6A && b <= 0x78) return sig({i32, i32}, i32);
  if (b >= 0x79 && b <= 0x7B) return sig({i64}, i64);
  if (b >= 0x7C && b <= 0x8A) return sig({i64, i64}, i64);
  if (b >= 0x8B && b <= 0x91) return sig({f32}, f32);
  if (b >= 0x92 && b <= 0x98) return sig({f32, f32}, f32);
  if (b >= 0x99 && b <= 0x9F) return sig({f64}, f64);
  if (b >= 0xA0 && b <= 0xA6) return sig({f64, f64}, f64);
  switch (op) {
    case Opcode::I32WrapI64: return sig({i64}, i32);
    case Opcode::I32TruncF32S: case Opcode::I32TruncF32U:
      return sig({f32}, i32);
    case Opcode::I32TruncF64S: case Opcode::I32TruncF64U:
      return sig({f64}, i32);
    case Opcode::I64ExtendI32S: case Opcode::I64ExtendI32U:
      return sig({i32}, i64);
    case Opcode::I64TruncF32S: case Opcode::I64TruncF32U:
      return sig({f32}, i64);
    case Opcode::I64TruncF64S: case Opcode::I64TruncF64U:
      return sig({f64}, i64);
    case Opcode::F32ConvertI32S: case Opcode::F32ConvertI32U:
      return sig({i32}, f32);
    case Opcode::F32ConvertI64S: case Opcode::F32ConvertI64U:
      return sig({i64}, f32);
    case Opcode::F32DemoteF64: return sig({f64}, f32);
    case Opcode::F64ConvertI32S: case Opcode::F64ConvertI32U:
      return sig({i32}, f64);
    case Opcode::F64ConvertI64S: case Opcode::F64ConvertI64U:
      return sig({i64}, f64);
    case Opcode::F64PromoteF32: return sig({f32}, f64);
    case Opcode::I32ReinterpretF32: return sig({f32}, i32);
    case Opcode::I64ReinterpretF64: return sig({f64}, i64);
    case Opcode::F32ReinterpretI32: return sig({i32}, f32);
    case Opcode::F64ReinterpretI64: return sig({i64}, f64);
    default: return false;
  }
}

class Typer {
 public:
  Typer(const Module& m, const Function& f) : m_(m), f_(f) {
    const FuncType& ty = m.types.at(f.type_index);
    locals_ = ty.params;
    locals_.insert(locals_.end(), f.locals.begin(), f.locals.end());
    results_ = ty.results;
  }

  TypingResult run() {
    TypingResult res;
    auto& t = res.typing;
    size_t n = f_.body.size();
    t.boundaries.resize(n + 1);
    t.matching_end.assign(n, -1);
    t.matching_else.assign(n, -1);
    t.opener_of.assign(n, -1);

    push_ctrl(Opcode::End, UINT32_MAX, results_);
    bool func_frame_closed = false;

    for (uint32_t i = 0; i < n; ++i) {
      snapshot(t.boundaries[i]);
      if (func_frame_closed) {
        res.error = at(i, "instruction after the function's closing end");
        return res;
      }
      const Instruction& ins = f_.body[i];
      if (auto err = step(ins, i, t, func_frame_closed)) {
        res.error = at(i, *err);
        return res;
      }
    }
    snapshot(t.boundaries[n]);
    if (!func_frame_closed) {
      res.error = "body is not terminated by end";
      return res;
    }
    return res;
  }

 private:
  std::string at(uint32_t i, const std::string& msg) {
    std::ostringstream os;
    os << "instr " << i << " (" << mnemonic(f_.body[i].op) << "): " << msg;
    return os.str();
  }

  void snapshot(BoundaryInfo& b) {
    b.reachable = std::none_of(ctrls_.begin(), ctrls_.end(),
                               [](const Ctrl& c) { return c.dead; });
    if (b.reachable) {
      b.stack.reserve(vals_.size());
      for (const Opd& o : vals_) b.stack.push_back(*o);
    }
    b.frames.reserve(ctrls_.size());
    for (const Ctrl& c : ctrls_)
      if (c.open_at != UINT32_MAX) b.frames.push_back(c.open_at);
  }

  void push_ctrl(Opcode opener, uint32_t open_at, std::vector<ValType> end) {
    ctrls_.push_back(Ctrl{opener, open_at, std::move(end), vals_.size(), false});
  }

  std::optional<std::string> pop_opd(Opd expect, Opd* got = nullptr) {
    Ctrl& fr = ctrls_.back();
    Opd actual;
    if (vals_.size() == fr.height) {
      if (!fr.dead) return "stack underflow";
      actual = std::nullopt;
    } else {
      actual = vals_.back();
      vals_.pop_back();
    }
    if (actual && expect && *actual != *expect) {
      return std::string("expected ") + std::string(valtype_name(*expect)) +
             " but stack has " + std::string(valtype_name(*actual));
    }
    if (got) *got = actual ? actual : expect;
    return std::nullopt;
  }

  std::optional<std::string> pop_types(const std::vector<ValType>& types) {
    for (auto it = types.rbegin(); it != types.rend(); ++it)
      if (auto err = pop_opd(*it)) return err;
    return std::nullopt;
  }

  void push_types(const std::vector<ValType>& types) {
    for (ValType v : types) vals_.push_back(v);
  }

  void mark_dead() {
    vals_.resize(ctrls_.back().height);
    ctrls_.back().dead = true;
  }

  std::vector<ValType> label_types(const Ctrl& c) const {
    if (c.opener == Opcode::Loop) return {};
    return c.end_types;
  }

  std::vector<ValType> blocktype_results(uint64_t bt) const {
    if (bt == 0x40) return {};
    return {static_cast<ValType>(bt)};
  }

  std::optional<ValType> global_type(uint32_t index, bool* mut) const {
    uint32_t i = 0;
    for (const auto& im : m_.imports) {
      if (im.kind != ExternalKind::Global) continue;
      if (i == index) {
        if (mut) *mut = im.global_mutable;
        return im.global_type;
      }
      ++i;
    }
    uint32_t d = index - i;
    if (d >= m_.globals.size()) return std::nullopt;
    if (mut) *mut = m_.globals[d].mut;
    return m_.globals[d].type;
  }

  std::optional<std::string> step(const Instruction& ins, uint32_t i,
                                  BodyTyping& t, bool& func_frame_closed) {
    switch (ins.op) {
      case Opcode::Unreachable:
        mark_dead();
        return std::nullopt;
      case Opcode::Nop:
        return std::nullopt;
      case Opcode::Block:
        push_ctrl(Opcode::Block, i, blocktype_results(ins.imm[0]));
        return std::nullopt;
      case Opcode::Loop:
        push_ctrl(Opcode::Loop, i, blocktype_results(ins.imm[0]));
        return std::nullopt;
      case Opcode::If:
        if (auto err = pop_opd(ValType::I32)) return err;
        push_ctrl(Opcode::If, i, blocktype_results(ins.imm[0]));
        return std::nullopt;
      case Opcode::Else: {
        Ctrl fr = ctrls_.back();
        if (fr.opener != Opcode::If) return "else without matching if";
        if (auto err = pop_types(fr.end_types)) return err;
        if (vals_.size() != fr.height) return "operands left on stack at else";
        ctrls_.pop_back();
        t.matching_else[fr.open_at] = static_cast<int32_t>(i);
        t.opener_of[i] = static_cast<int32_t>(fr.open_at);
        push_ctrl(Opcode::Else, fr.open_at, fr.end_types);
        return std::nullopt;
      }
      case Opcode::End: {
        Ctrl fr = ctrls_.back();
        if (auto err = pop_types(fr.end_types)) return err;
        if (vals_.size() != fr.height) return "operands left on stack at end";
        if (fr.opener == Opcode::If && !fr.end_types.empty())
          return "if with a result needs an else arm";
        ctrls_.pop_back();
        if (fr.open_at == UINT32_MAX) {
          func_frame_closed = true;
        } else {
          t.matching_end[fr.open_at] = static_cast<int32_t>(i);
          t.opener_of[i] = static_cast<int32_t>(fr.open_at);
        }
        push_types(fr.end_types);
        return std::nullopt;
      }
      case Opcode::Br: {
        uint32_t l = ins.index();
        if (l >= ctrls_.size()) return "branch depth out of range";
        if (auto err = pop_types(label_types(ctrls_[ctrls_.size() - 1 - l])))
          return err;
        mark_dead();
        return std::nullopt;
      }
      case Opcode::BrIf: {
        uint32_t l = ins.index();
        if (l >= ctrls_.size()) return "branch depth out of range";
        if (auto err = pop_opd(ValType::I32)) return err;
        auto types = label_types(ctrls_[ctrls_.size() - 1 - l]);
        if (auto err = pop_types(types)) return err;
        push_types(types);
        return std::nullopt;
      }
      case Opcode::BrTable: {
        uint32_t def = static_cast<uint32_t>(ins.imm.back());
        if (def >= ctrls_.size()) return "branch depth out of range";
        auto def_types = label_types(ctrls_[ctrls_.size() - 1 - def]);
        for (size_t k = 0; k + 1 < ins.imm.size(); ++k) {
          uint32_t l = static_cast<uint32_t>(ins.imm[k]);
          if (l >= ctrls_.size()) return "branch depth out of range";
          if (label_types(ctrls_[ctrls_.size() - 1 - l]) != def_types)
            return "br_table targets have mismatched label types";
        }
        if (auto err = pop_opd(ValType::I32)) return err;
        if (auto err = pop_types(def_types)) return err;
        mark_dead();
        return std::nullopt;
      }
      case Opcode::Return:
        if (auto err = pop_types(results_)) return err;
        mark_dead();
        return std::nullopt;
      case Opcode::Call: {
        uint32_t fi = ins.index();
        if (fi >= m_.num_funcs()) return "call target out of range";
        const FuncType& ft = m_.func_type(fi);
        if (auto err = pop_types(ft.params)) return err;
        push_types(ft.results);
        return std::nullopt;
      }
      case Opcode::CallIndirect: {
        uint32_t ti = static_cast<uint32_t>(ins.imm[0]);
        if (ti >= m_.types.size()) return "call_indirect type out of range";
        if (!m_.has_table()) return "call_indirect without a table";
        if (auto err = pop_opd(ValType::I32)) return err;
        const FuncType& ft = m_.types[ti];
        if (auto err = pop_types(ft.params)) return err;
        push_types(ft.results);
        return std::nullopt;
      }
      case Opcode::Drop:
        return pop_opd(std::nullopt);
      case Opcode::Select: {
        if (auto err = pop_opd(ValType::I32)) return err;
        Opd a, b;
        if (auto err = pop_opd(std::nullopt, &a)) return err;
        if (auto err = pop_opd(a, &b)) return err;
        vals_.push_back(b ? b : a);
        return std::nullopt;
      }
      case Opcode::LocalGet: {
        uint32_t l = ins.index();
        if (l >= locals_.size()) return "local index out of range";
        vals_.push_back(locals_[l]);
        return std::nullopt;
      }
      case Opcode::LocalSet: {
        uint32_t l = ins.index();
        if (l >= locals_.size()) return "local index out of range";
        return pop_opd(locals_[l]);
      }
      case Opcode::LocalTee: {
        uint32_t l = ins.index();
        if (l >= locals_.size()) return "local index out of range";
        if (auto err = pop_opd(locals_[l])) return err;
        vals_.push_back(locals_[l]);
        return std::nullopt;
      }
      case Opcode::GlobalGet: {
        auto gt = global_type(ins.index(), nullptr);
        if (!gt) return "global index out of range";
        vals_.push_back(*gt);
        return std::nullopt;
      }
      case Opcode::GlobalSet: {
        bool mut = false;
        auto gt = global_type(ins.index(), &mut);
        if (!gt) return "global index out of range";
        if (!mut) return "global.set of an immutable global";
        return pop_opd(*gt);
      }
      case Opcode::MemorySize:
        if (!m_.has_memory()) return "memory.size without a memory";
        vals_.push_back(ValType::I32);
        return std::nullopt;
      case Opcode::MemoryGrow:
        if (!m_.has_memory()) return "memory.grow without a memory";
        if (auto err = pop_opd(ValType::I32)) return err;
        vals_.push_back(ValType::I32);
        return std::nullopt;
      case Opcode::I32Const:
        vals_.push_back(ValType::I32);
        return std::nullopt;
      case Opcode::I64Const:
        vals_.push_back(ValType::I64);
        return std::nullopt;
      case Opcode::F32Const:
        vals_.push_back(ValType::F32);
        return std::nullopt;
      case Opcode::F64Const:
        vals_.push_back(ValType::F64);
        return std::nullopt;
      default:
        break;
    }
    if (auto mo = mem_op(ins.op)) {
      if (!m_.has_memory()) return "memory access without a memory";
      uint32_t align = static_cast<uint32_t>(ins.imm[0]);
      if ((uint32_t{1} << align) > mo->width)
        return "alignment larger than natural";
      if (mo->is_store) {
        if (auto err = pop_opd(mo->type)) return err;
        return pop_opd(ValType::I32);
      }
      if (auto err = pop_opd(ValType::I32)) return err;
      vals_.push_back(mo->type);
      return std::nullopt;
    }
    std::vector<ValType> in;
    ValType out;
    if (numeric_signature(ins.op, in, out)) {
      if (auto err = pop_types(in)) return err;
      vals_.push_back(out);
      return std::nullopt;
    }
    return "opcode not handled by the typer";
  }

  const Module& m_;
  const Function& f_;
  std::vector<ValType> locals_;
  std::vector<ValType> results_;
  std::vector<Opd> vals_;
  std::vector<Ctrl> ctrls_;
};

}  // namespace

TypingResult type_function_body(const Module& m, const Function& f) {
  return Typer(m, f).run();
}

std::vector<ValType> branch_label_types(const Module& m, const Function& f,
                                        const BodyTyping& t,
                                        uint32_t instr_index, uint32_t label) {
  const auto& frames = t.boundaries.at(instr_index).frames;
  if (label >= frames.size()) return m.types.at(f.type_index).results;
  uint32_t opener = frames[frames.size() - 1 - label];
  const Instruction& ins = f.body.at(opener);
  if (ins.op == Opcode::Loop) return {};
  if (ins.imm[0] == 0x40) return {};
  return {static_cast<ValType>(ins.imm[0])};
}

}  // namespace wasmshade
