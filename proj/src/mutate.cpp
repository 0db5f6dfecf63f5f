#include "wasmshade/mutate.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wasmshade/analysis.hpp"
#include "wasmshade/interp.hpp"
#include "wasmshade/rng.hpp"
#include "wasmshade/validate.hpp"

namespace wasmshade {

namespace {

using json = nlohmann::json;

constexpr std::string_view kKindNames[] = {
    "code-motion", "peephole",       "add-function",
    "add-type",    "add-custom-section", "remove-item",
};

// ---------------------------------------------------------------------------
// Opcode classification

// Stack arity of instructions that are pure, deterministic, and cannot trap.
// Only these may appear inside an operand subtree that gets reordered; the
// conservative cut keeps every swap trivially order-independent.
std::optional<std::pair<int, int>> pure_arity(Opcode op) {
  switch (op) {
    case Opcode::I32Const:
    case Opcode::I64Const:
    case Opcode::F32Const:
    case Opcode::F64Const:
    case Opcode::LocalGet:
    case Opcode::GlobalGet:
      return {{0, 1}};
    case Opcode::Drop:
      return {{1, 0}};
    case Opcode::Select:
      return {{3, 1}};
    default:
      break;
  }
  uint8_t b = static_cast<uint8_t>(op);
  if (b >= 0x45 && b <= 0x66) {  // comparisons
    if (op == Opcode::I32Eqz || op == Opcode::I64Eqz) return {{1, 1}};
    return {{2, 1}};
  }
  // integer div/rem trap on zero/overflow
  if ((b >= 0x6D && b <= 0x70) || (b >= 0x7F && b <= 0x82)) return std::nullopt;
  if (b >= 0x67 && b <= 0xA6) {  // numeric ops
    bool unary = (b >= 0x67 && b <= 0x69) || (b >= 0x79 && b <= 0x7B) ||
                 (b >= 0x8B && b <= 0x91) || (b >= 0x99 && b <= 0x9F);
    return unary ? std::pair<int, int>{1, 1} : std::pair<int, int>{2, 1};
  }
  if (b >= 0xA8 && b <= 0xB1) return std::nullopt;  // trunc family traps
  if (b == 0xA7 || (b >= 0xAC && b <= 0xBF)) return {{1, 1}};  // conversions
  return std::nullopt;
}

bool is_commutative(Opcode op) {
  switch (op) {
    case Opcode::I32Add:
    case Opcode::I32Mul:
    case Opcode::I32And:
    case Opcode::I32Or:
    case Opcode::I32Xor:
    case Opcode::I32Eq:
    case Opcode::I32Ne:
    case Opcode::I64Add:
    case Opcode::I64Mul:
    case Opcode::I64And:
    case Opcode::I64Or:
    case Opcode::I64Xor:
    case Opcode::I64Eq:
    case Opcode::I64Ne:
    case Opcode::F32Add:
    case Opcode::F32Mul:
    case Opcode::F32Min:
    case Opcode::F32Max:
    case Opcode::F32Eq:
    case Opcode::F32Ne:
    case Opcode::F64Add:
    case Opcode::F64Mul:
    case Opcode::F64Min:
    case Opcode::F64Max:
    case Opcode::F64Eq:
    case Opcode::F64Ne:
      return true;
    default:
      return false;
  }
}

// True when executing `ins` leaves its own result as the new top of stack,
// which makes the boundary right after it safe for identity insertion (the
// inserted ops only touch a value the current frame owns).
bool leaves_result_on_top(const Module& m, const Instruction& ins) {
  switch (ins.op) {
    case Opcode::I32Const:
    case Opcode::I64Const:
    case Opcode::F32Const:
    case Opcode::F64Const:
    case Opcode::LocalGet:
    case Opcode::LocalTee:
    case Opcode::GlobalGet:
    case Opcode::MemorySize:
    case Opcode::MemoryGrow:
    case Opcode::Select:
      return true;
    case Opcode::Call:
      return !m.func_type(ins.index()).results.empty();
    case Opcode::CallIndirect:
      return !m.types.at(ins.imm[0]).results.empty();
    default:
      break;
  }
  uint8_t b = static_cast<uint8_t>(ins.op);
  if (b >= 0x28 && b <= 0x35) return true;  // loads
  if (b >= 0x45 && b <= 0xBF) return true;  // numerics and conversions
  return false;
}

// ---------------------------------------------------------------------------
// Shared body-editing helpers

// Finds the two operand subtrees feeding the binary op at `k`: A = [a0, b0),
// B = [b0, k). Both must consist solely of pure non-trapping instructions,
// otherwise reordering could change trap order or observable effects.
bool split_operands(const InstrSeq& body, uint32_t k, uint32_t& a0,
                    uint32_t& b0) {
  auto walk_one = [&](int end_idx, uint32_t& start) {
    int need = 1;
    for (int i = end_idx; i >= 0; --i) {
      auto ar = pure_arity(body[i].op);
      if (!ar) return false;
      need = need - ar->second + ar->first;
      if (need == 0) {
        start = static_cast<uint32_t>(i);
        return true;
      }
    }
    return false;
  };
  if (k == 0) return false;
  uint32_t bstart = 0, astart = 0;
  if (!walk_one(static_cast<int>(k) - 1, bstart)) return false;
  if (bstart == 0) return false;
  if (!walk_one(static_cast<int>(bstart) - 1, astart)) return false;
  a0 = astart;
  b0 = bstart;
  return true;
}

// A region [lo, hi] of the original body is being nested one frame deeper.
// Branch targets that resolve to an opener inside the region keep their
// depth; everything else (outer frames and the function frame) gains one.
Instruction relabel_branch(const Instruction& ins,
                           const std::vector<uint32_t>& frames, uint32_t lo,
                           uint32_t hi) {
  auto fix = [&](uint64_t d) -> uint64_t {
    if (d < frames.size()) {
      uint32_t opener = frames[frames.size() - 1 - static_cast<size_t>(d)];
      if (opener >= lo && opener <= hi) return d;
    }
    return d + 1;
  };
  Instruction out = ins;
  if (ins.op == Opcode::Br || ins.op == Opcode::BrIf) {
    out.imm[0] = fix(ins.imm[0]);
  } else if (ins.op == Opcode::BrTable) {
    for (auto& t : out.imm) t = fix(t);
  }
  return out;
}

Instruction random_const(Rng& rng, ValType t) {
  switch (t) {
    case ValType::I32:
      return i32_const(static_cast<int32_t>(rng.next() & 0xffff) - 0x8000);
    case ValType::I64:
      return i64_const(static_cast<int64_t>(rng.next() & 0xffffff) - 0x800000);
    case ValType::F32: {
      float v = static_cast<float>(static_cast<int64_t>(rng.below(512)) - 256);
      return make_instr(Opcode::F32Const, std::bit_cast<uint32_t>(v));
    }
    case ValType::F64: {
      double v = static_cast<double>(static_cast<int64_t>(rng.below(512)) - 256);
      return make_instr(Opcode::F64Const, std::bit_cast<uint64_t>(v));
    }
  }
  return i32_const(0);
}

// ---------------------------------------------------------------------------
// Peephole

enum PeepRule : uint32_t {
  kOperandSwap = 0,
  kAddZero,
  kXorZero,
  kMulOne,
  kConstSplit,
  kDoubleNegate,
  kNopInsert,
  kSelectWrap,
  kNumPeepRules,
};

struct PeepSite {
  uint32_t func = 0;  // index into m.functions
  uint32_t instr = 0;
  uint32_t rule = 0;
  ValType top = ValType::I32;  // type acted on, where relevant
  uint32_t a0 = 0, b0 = 0;     // operand split for kOperandSwap
};

uint32_t peep_rule_mask(const std::vector<std::string>& names) {
  if (names.empty()) return (1u << kNumPeepRules) - 1;
  uint32_t mask = 0;
  for (const auto& n : names) {
    bool found = false;
    for (uint32_t i = 0; i < kNumPeepRules; ++i) {
      if (n == kPeepholeRuleNames[i]) {
        mask |= 1u << i;
        found = true;
        break;
      }
    }
    if (!found) throw Error(ErrorCode::InvalidArgument, "unknown peephole rule: " + n);
  }
  return mask;
}

std::vector<PeepSite> collect_peephole_sites(const Module& m, uint32_t mask) {
  std::vector<PeepSite> sites;
  for (uint32_t fi = 0; fi < m.functions.size(); ++fi) {
    const Function& f = m.functions[fi];
    auto tr = type_function_body(m, f);
    if (tr.error) continue;  // callers hand us valid modules; belt and braces
    const auto& bt = tr.typing;
    for (uint32_t k = 0; k < f.body.size(); ++k) {
      const Instruction& ins = f.body[k];
      const BoundaryInfo& after = bt.boundaries[k + 1];
      bool topped = leaves_result_on_top(m, ins) && after.reachable &&
                    !after.stack.empty();
      ValType top = topped ? after.stack.back() : ValType::I32;
      bool top_int = topped && (top == ValType::I32 || top == ValType::I64);

      if (mask & (1u << kOperandSwap)) {
        uint32_t a0 = 0, b0 = 0;
        if (is_commutative(ins.op) && split_operands(f.body, k, a0, b0)) {
          sites.push_back({fi, k, kOperandSwap, ValType::I32, a0, b0});
        }
      }
      if ((mask & (1u << kAddZero)) && top_int)
        sites.push_back({fi, k, kAddZero, top, 0, 0});
      if ((mask & (1u << kXorZero)) && top_int)
        sites.push_back({fi, k, kXorZero, top, 0, 0});
      if ((mask & (1u << kMulOne)) && top_int)
        sites.push_back({fi, k, kMulOne, top, 0, 0});
      if ((mask & (1u << kConstSplit)) &&
          (ins.op == Opcode::I32Const || ins.op == Opcode::I64Const)) {
        sites.push_back({fi, k, kConstSplit,
                         ins.op == Opcode::I32Const ? ValType::I32 : ValType::I64,
                         0, 0});
      }
      if ((mask & (1u << kDoubleNegate)) && topped)
        sites.push_back({fi, k, kDoubleNegate, top, 0, 0});
      if (mask & (1u << kNopInsert))
        sites.push_back({fi, k, kNopInsert, ValType::I32, 0, 0});
      if ((mask & (1u << kSelectWrap)) && topped)
        sites.push_back({fi, k, kSelectWrap, top, 0, 0});
    }
  }
  return sites;
}

void apply_peephole(Module& m, const PeepSite& s, Rng& rng) {
  InstrSeq& body = m.functions[s.func].body;
  uint32_t k = s.instr;
  auto insert_after = [&](std::initializer_list<Instruction> seq) {
    body.insert(body.begin() + k + 1, seq.begin(), seq.end());
  };
  bool i32 = s.top == ValType::I32;
  switch (s.rule) {
    case kOperandSwap: {
      InstrSeq nb(body.begin(), body.begin() + s.a0);
      nb.insert(nb.end(), body.begin() + s.b0, body.begin() + k);
      nb.insert(nb.end(), body.begin() + s.a0, body.begin() + s.b0);
      nb.insert(nb.end(), body.begin() + k, body.end());
      body = std::move(nb);
      break;
    }
    case kAddZero:
      insert_after({i32 ? i32_const(0) : i64_const(0),
                    make_instr(i32 ? Opcode::I32Add : Opcode::I64Add)});
      break;
    case kXorZero:
      insert_after({i32 ? i32_const(0) : i64_const(0),
                    make_instr(i32 ? Opcode::I32Xor : Opcode::I64Xor)});
      break;
    case kMulOne:
      insert_after({i32 ? i32_const(1) : i64_const(1),
                    make_instr(i32 ? Opcode::I32Mul : Opcode::I64Mul)});
      break;
    case kConstSplit: {
      if (i32) {
        uint32_t c = static_cast<uint32_t>(body[k].i32());
        uint32_t c1 = static_cast<uint32_t>(rng.next());
        InstrSeq repl = {i32_const(static_cast<int32_t>(c1)),
                         i32_const(static_cast<int32_t>(c - c1)),
                         make_instr(Opcode::I32Add)};
        body.erase(body.begin() + k);
        body.insert(body.begin() + k, repl.begin(), repl.end());
      } else {
        uint64_t c = static_cast<uint64_t>(body[k].i64());
        uint64_t c1 = rng.next();
        InstrSeq repl = {i64_const(static_cast<int64_t>(c1)),
                         i64_const(static_cast<int64_t>(c - c1)),
                         make_instr(Opcode::I64Add)};
        body.erase(body.begin() + k);
        body.insert(body.begin() + k, repl.begin(), repl.end());
      }
      break;
    }
    case kDoubleNegate:
      switch (s.top) {
        case ValType::I32:
          insert_after({i32_const(-1), make_instr(Opcode::I32Xor),
                        i32_const(-1), make_instr(Opcode::I32Xor)});
          break;
        case ValType::I64:
          insert_after({i64_const(-1), make_instr(Opcode::I64Xor),
                        i64_const(-1), make_instr(Opcode::I64Xor)});
          break;
        case ValType::F32:
          insert_after({make_instr(Opcode::F32Neg), make_instr(Opcode::F32Neg)});
          break;
        case ValType::F64:
          insert_after({make_instr(Opcode::F64Neg), make_instr(Opcode::F64Neg)});
          break;
      }
      break;
    case kNopInsert:
      body.insert(body.begin() + k, make_instr(Opcode::Nop));
      break;
    case kSelectWrap:
      insert_after({random_const(rng, s.top), i32_const(1),
                    make_instr(Opcode::Select)});
      break;
    default:
      break;
  }
}

// ---------------------------------------------------------------------------
// Code motion

enum MotionForm : uint8_t { kBlockWrap = 0, kIfSwap, kLoopPeel };
constexpr std::string_view kMotionNames[] = {"block-wrap", "if-swap", "loop-peel"};

struct MotionSite {
  uint32_t func = 0;
  uint32_t instr = 0;
  uint8_t form = 0;
  uint8_t bt_byte = 0x40;  // blocktype for kBlockWrap
};

// Guard shape at the top of a loop body: a few pure producers/comparisons
// followed by a br_if that exits the loop. When the first instructions do
// not match, the loop is skipped rather than analysed harder.
bool has_leading_exit_guard(const InstrSeq& body, uint32_t loop, uint32_t end) {
  uint32_t limit = std::min(loop + 5, end);  // guard = at most 4 instrs
  for (uint32_t j = loop + 1; j < limit; ++j) {
    if (body[j].op == Opcode::BrIf) return j > loop + 1 && body[j].imm[0] >= 1;
    switch (body[j].op) {
      case Opcode::LocalGet:
      case Opcode::GlobalGet:
      case Opcode::I32Const:
      case Opcode::I64Const:
      case Opcode::F32Const:
      case Opcode::F64Const:
        continue;
      default: {
        uint8_t b = static_cast<uint8_t>(body[j].op);
        if (b >= 0x45 && b <= 0x66) continue;  // comparison
        return false;
      }
    }
  }
  return false;
}

std::vector<MotionSite> collect_motion_sites(const Module& m) {
  std::vector<MotionSite> sites;
  for (uint32_t fi = 0; fi < m.functions.size(); ++fi) {
    const Function& f = m.functions[fi];
    auto tr = type_function_body(m, f);
    if (tr.error) continue;
    const auto& bt = tr.typing;
    for (uint32_t k = 0; k < f.body.size(); ++k) {
      const Instruction& ins = f.body[k];
      // block-wrap of a complete block/loop construct
      if (ins.op == Opcode::Block || ins.op == Opcode::Loop) {
        uint32_t e = static_cast<uint32_t>(bt.matching_end[k]);
        const auto& before = bt.boundaries[k];
        const auto& after = bt.boundaries[e + 1];
        if (before.reachable && after.reachable) {
          size_t net = after.stack.size() - before.stack.size();
          if (after.stack.size() >= before.stack.size() && net <= 1) {
            uint8_t bt_byte =
                net == 0 ? 0x40 : static_cast<uint8_t>(after.stack.back());
            sites.push_back({fi, k, kBlockWrap, bt_byte});
          }
        }
      }
      // block-wrap of a lone pure producer or nop
      bool lone = ins.op == Opcode::Nop || ins.op == Opcode::I32Const ||
                  ins.op == Opcode::I64Const || ins.op == Opcode::F32Const ||
                  ins.op == Opcode::F64Const || ins.op == Opcode::LocalGet ||
                  ins.op == Opcode::GlobalGet || ins.op == Opcode::MemorySize;
      if (lone && bt.boundaries[k].reachable && bt.boundaries[k + 1].reachable) {
        uint8_t bt_byte =
            ins.op == Opcode::Nop
                ? 0x40
                : static_cast<uint8_t>(bt.boundaries[k + 1].stack.back());
        sites.push_back({fi, k, kBlockWrap, bt_byte});
      }
      if (ins.op == Opcode::If && bt.matching_else[k] >= 0)
        sites.push_back({fi, k, kIfSwap, 0x40});
      if (ins.op == Opcode::Loop && ins.imm[0] == 0x40 &&
          bt.boundaries[k].reachable) {
        uint32_t e = static_cast<uint32_t>(bt.matching_end[k]);
        if (e - k - 1 <= 64 && has_leading_exit_guard(f.body, k, e))
          sites.push_back({fi, k, kLoopPeel, 0x40});
      }
    }
  }
  return sites;
}

void apply_motion(Module& m, const MotionSite& s) {
  Function& f = m.functions[s.func];
  auto tr = type_function_body(m, f);
  const auto& bt = tr.typing;
  const InstrSeq& body = f.body;
  uint32_t k = s.instr;
  switch (s.form) {
    case kBlockWrap: {
      uint32_t e = k;
      if (body[k].op == Opcode::Block || body[k].op == Opcode::Loop)
        e = static_cast<uint32_t>(bt.matching_end[k]);
      InstrSeq nb(body.begin(), body.begin() + k);
      nb.push_back(make_instr(Opcode::Block, s.bt_byte));
      for (uint32_t i = k; i <= e; ++i)
        nb.push_back(relabel_branch(body[i], bt.boundaries[i].frames, k, e));
      nb.push_back(make_instr(Opcode::End));
      nb.insert(nb.end(), body.begin() + e + 1, body.end());
      f.body = std::move(nb);
      break;
    }
    case kIfSwap: {
      uint32_t ei = static_cast<uint32_t>(bt.matching_else[k]);
      uint32_t en = static_cast<uint32_t>(bt.matching_end[k]);
      InstrSeq nb(body.begin(), body.begin() + k);
      nb.push_back(make_instr(Opcode::I32Eqz));
      nb.push_back(body[k]);  // the if, same blocktype
      nb.insert(nb.end(), body.begin() + ei + 1, body.begin() + en);  // old else arm
      nb.push_back(body[ei]);                                         // else
      nb.insert(nb.end(), body.begin() + k + 1, body.begin() + ei);   // old then arm
      nb.insert(nb.end(), body.begin() + en, body.end());
      f.body = std::move(nb);
      break;
    }
    case kLoopPeel: {
      // One guarded iteration is unrolled in front of the loop:
      //   block            ; exit target for the peeled copy's fallthrough
      //     block          ; "continue": falling out of it enters the loop
      //       <body copy>  ; back-edges now land on the inner block
      //       br 1
      //     end
      //     loop <body> end
      //   end
      // Branches to the loop header keep their depth (they hit the inner
      // block in the copy, the loop in the original); branches that left the
      // loop gain one level for the extra wrapping block.
      uint32_t e = static_cast<uint32_t>(bt.matching_end[k]);
      InstrSeq nb(body.begin(), body.begin() + k);
      nb.push_back(make_instr(Opcode::Block, 0x40));
      nb.push_back(make_instr(Opcode::Block, 0x40));
      for (uint32_t i = k + 1; i < e; ++i)
        nb.push_back(relabel_branch(body[i], bt.boundaries[i].frames, k, e));
      nb.push_back(make_instr(Opcode::Br, 1));
      nb.push_back(make_instr(Opcode::End));
      nb.push_back(body[k]);  // the loop itself
      for (uint32_t i = k + 1; i < e; ++i)
        nb.push_back(relabel_branch(body[i], bt.boundaries[i].frames, k, e));
      nb.push_back(make_instr(Opcode::End));  // loop end
      nb.push_back(make_instr(Opcode::End));  // outer block end
      nb.insert(nb.end(), body.begin() + e + 1, body.end());
      f.body = std::move(nb);
      break;
    }
    default:
      break;
  }
}

// ---------------------------------------------------------------------------
// Additive kinds

uint32_t type_index_for(Module& m, const FuncType& sig) {
  for (uint32_t i = 0; i < m.types.size(); ++i)
    if (m.types[i] == sig) return i;
  m.types.push_back(sig);
  return static_cast<uint32_t>(m.types.size() - 1);
}

std::string add_function(Module& m, Rng& rng) {
  constexpr ValType kPool[] = {ValType::I32, ValType::I64, ValType::F32,
                               ValType::F64};
  FuncType sig;
  uint64_t nparams = rng.below(3);
  for (uint64_t i = 0; i < nparams; ++i)
    sig.params.push_back(kPool[rng.below(4)]);
  ValType ret = kPool[rng.below(4)];
  sig.results = {ret};

  // Operand: a matching param when one exists and the coin says so,
  // otherwise a constant. Everything stays pure: no calls, no memory.
  std::vector<uint32_t> same_type_params;
  for (uint32_t i = 0; i < sig.params.size(); ++i)
    if (sig.params[i] == ret) same_type_params.push_back(i);
  auto operand = [&]() -> Instruction {
    if (!same_type_params.empty() && rng.below(2) == 0)
      return make_instr(Opcode::LocalGet,
                        same_type_params[rng.below(same_type_params.size())]);
    return random_const(rng, ret);
  };
  auto binop = [&]() -> Instruction {
    switch (ret) {
      case ValType::I32: {
        constexpr Opcode ops[] = {Opcode::I32Add, Opcode::I32Xor, Opcode::I32And,
                                  Opcode::I32Or, Opcode::I32Mul};
        return make_instr(ops[rng.below(5)]);
      }
      case ValType::I64: {
        constexpr Opcode ops[] = {Opcode::I64Add, Opcode::I64Xor, Opcode::I64And,
                                  Opcode::I64Or, Opcode::I64Mul};
        return make_instr(ops[rng.below(5)]);
      }
      case ValType::F32:
        return make_instr(rng.below(2) == 0 ? Opcode::F32Add : Opcode::F32Mul);
      case ValType::F64:
        return make_instr(rng.below(2) == 0 ? Opcode::F64Add : Opcode::F64Mul);
    }
    return make_instr(Opcode::I32Add);
  };

  Function fn;
  fn.body.push_back(operand());
  uint64_t pairs = rng.below(6);
  for (uint64_t p = 0; p < pairs; ++p) {
    fn.body.push_back(operand());
    fn.body.push_back(binop());
  }
  fn.body.push_back(make_instr(Opcode::End));
  fn.type_index = type_index_for(m, sig);
  m.functions.push_back(std::move(fn));
  uint32_t abs = m.num_funcs() - 1;
  return "new func " + std::to_string(abs) + " (" +
         std::to_string(m.functions.back().body.size()) + " instrs)";
}

std::string add_type(Module& m, Rng& rng) {
  constexpr ValType kPool[] = {ValType::I32, ValType::I64, ValType::F32,
                               ValType::F64};
  FuncType sig;
  uint64_t nparams = rng.below(4);
  for (uint64_t i = 0; i < nparams; ++i)
    sig.params.push_back(kPool[rng.below(4)]);
  if (rng.below(2) == 1) sig.results.push_back(kPool[rng.below(4)]);
  m.types.push_back(std::move(sig));
  return "new type " + std::to_string(m.types.size() - 1);
}

std::string add_custom_section(Module& m, Rng& rng) {
  CustomSection cs;
  cs.name = "shade." + hex64(rng.next()).substr(0, 8);
  uint64_t n = 1 + rng.below(32);
  cs.bytes.reserve(n);
  for (uint64_t i = 0; i < n; ++i)
    cs.bytes.push_back(static_cast<uint8_t>(rng.next()));
  m.customs.push_back(std::move(cs));
  return "new custom " + std::to_string(m.customs.size() - 1) + " " +
         m.customs.back().name;
}

// ---------------------------------------------------------------------------
// Removal

struct RemovalSite {
  enum What : uint8_t { kCustom, kFunc, kType } what = kCustom;
  uint32_t index = 0;  // custom index, absolute func index, or type index
};

std::vector<RemovalSite> collect_removal_sites(const Module& m) {
  std::vector<RemovalSite> sites;
  for (uint32_t i = 0; i < m.customs.size(); ++i)
    sites.push_back({RemovalSite::kCustom, i});

  uint32_t imported = m.num_imported_funcs();
  std::vector<bool> func_referenced(m.num_funcs(), false);
  for (const auto& f : m.functions)
    for (const auto& ins : f.body)
      if (ins.op == Opcode::Call) func_referenced[ins.index()] = true;
  for (const auto& seg : m.elems)
    for (uint32_t fx : seg.func_indices) func_referenced[fx] = true;
  for (const auto& ex : m.exports)
    if (ex.kind == ExternalKind::Func) func_referenced[ex.index] = true;
  if (m.start) func_referenced[*m.start] = true;
  for (uint32_t d = 0; d < m.functions.size(); ++d)
    if (!func_referenced[imported + d])
      sites.push_back({RemovalSite::kFunc, imported + d});

  std::vector<bool> type_referenced(m.types.size(), false);
  for (const auto& f : m.functions) type_referenced[f.type_index] = true;
  for (const auto& im : m.imports)
    if (im.kind == ExternalKind::Func) type_referenced[im.type_index] = true;
  for (const auto& f : m.functions)
    for (const auto& ins : f.body)
      if (ins.op == Opcode::CallIndirect) type_referenced[ins.imm[0]] = true;
  for (uint32_t t = 0; t < m.types.size(); ++t)
    if (!type_referenced[t]) sites.push_back({RemovalSite::kType, t});
  return sites;
}

std::string apply_removal(Module& m, const RemovalSite& s) {
  switch (s.what) {
    case RemovalSite::kCustom: {
      std::string name = m.customs[s.index].name;
      m.customs.erase(m.customs.begin() + s.index);
      return "remove custom " + std::to_string(s.index) + " " + name;
    }
    case RemovalSite::kFunc: {
      uint32_t abs = s.index;
      m.functions.erase(m.functions.begin() + (abs - m.num_imported_funcs()));
      for (auto& f : m.functions)
        for (auto& ins : f.body)
          if (ins.op == Opcode::Call && ins.imm[0] > abs) --ins.imm[0];
      for (auto& seg : m.elems)
        for (auto& fx : seg.func_indices)
          if (fx > abs) --fx;
      for (auto& ex : m.exports)
        if (ex.kind == ExternalKind::Func && ex.index > abs) --ex.index;
      if (m.start && *m.start > abs) --*m.start;
      return "remove func " + std::to_string(abs);
    }
    case RemovalSite::kType: {
      uint32_t t = s.index;
      m.types.erase(m.types.begin() + t);
      for (auto& f : m.functions) {
        if (f.type_index > t) --f.type_index;
        for (auto& ins : f.body)
          if (ins.op == Opcode::CallIndirect && ins.imm[0] > t) --ins.imm[0];
      }
      for (auto& im : m.imports)
        if (im.kind == ExternalKind::Func && im.type_index > t) --im.type_index;
      return "remove type " + std::to_string(t);
    }
  }
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface

std::string_view mutation_kind_name(MutationKind k) {
  return kKindNames[static_cast<size_t>(k)];
}

std::optional<MutationKind> mutation_kind_from_name(std::string_view name) {
  for (size_t i = 0; i < std::size(kKindNames); ++i)
    if (kKindNames[i] == name) return static_cast<MutationKind>(i);
  return std::nullopt;
}

std::pair<Module, TraceEntry> apply_transformation(const Module& m,
                                                   const TransformationSpec& spec) {
  Rng rng(spec.seed);
  TraceEntry entry;
  entry.spec = spec;
  entry.site = "none";
  Module out = m;
  uint32_t imported = m.num_imported_funcs();

  switch (spec.kind) {
    case MutationKind::Peephole: {
      uint32_t mask = peep_rule_mask(spec.rules);
      auto sites = collect_peephole_sites(m, mask);
      if (sites.empty()) return {std::move(out), entry};
      const PeepSite& s = sites[rng.below(sites.size())];
      apply_peephole(out, s, rng);
      entry.site = "func " + std::to_string(imported + s.func) + " instr " +
                   std::to_string(s.instr) + " " +
                   std::string(kPeepholeRuleNames[s.rule]);
      break;
    }
    case MutationKind::CodeMotion: {
      auto sites = collect_motion_sites(m);
      if (sites.empty()) return {std::move(out), entry};
      const MotionSite& s = sites[rng.below(sites.size())];
      apply_motion(out, s);
      entry.site = "func " + std::to_string(imported + s.func) + " instr " +
                   std::to_string(s.instr) + " " +
                   std::string(kMotionNames[s.form]);
      break;
    }
    case MutationKind::AddFunction:
      entry.site = add_function(out, rng);
      break;
    case MutationKind::AddType:
      entry.site = add_type(out, rng);
      break;
    case MutationKind::AddCustomSection:
      entry.site = add_custom_section(out, rng);
      break;
    case MutationKind::RemoveItem: {
      auto sites = collect_removal_sites(m);
      if (sites.empty()) return {std::move(out), entry};
      entry.site = apply_removal(out, sites[rng.below(sites.size())]);
      break;
    }
  }
  entry.applied = true;
  require_valid(out, "transformed module");
  return {std::move(out), std::move(entry)};
}

StackResult stack_transformations(const Module& m, uint64_t n, uint64_t seed,
                                  std::span<const MutationKind> allowed,
                                  uint64_t check_every) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one iteration");
  if (allowed.empty())
    throw Error(ErrorCode::InvalidArgument, "allowed kinds must be non-empty");
  if (check_every < 1)
    throw Error(ErrorCode::InvalidArgument, "check_every must be >= 1");

  MutationTrace trace;
  trace.input_digest = module_digest(m);
  auto suite = make_differential_suite(m);
  Module cur = m;
  Rng meta(seed);
  for (uint64_t it = 0; it < n; ++it) {
    TransformationSpec spec;
    spec.kind = allowed[meta.below(allowed.size())];
    spec.seed = meta.next();
    auto [next, entry] = apply_transformation(cur, spec);
    entry.iteration = it;
    trace.entries.push_back(std::move(entry));
    if (trace.entries.back().applied) cur = std::move(next);
    if ((it + 1) % check_every == 0) {
      // Generous fuel: stacked insertions inflate the dynamic instruction
      // count, and a budget-only divergence would be a false alarm.
      auto dr = differential_check(m, cur, suite, 4 * kDefaultFuel);
      if (!dr.equivalent) {
        trace.output_digest = module_digest(cur);
        throw SemanticsViolationError(it, dr.detail, std::move(trace));
      }
    }
  }
  trace.output_digest = module_digest(cur);
  return {std::move(cur), std::move(trace)};
}

std::string trace_to_jsonl(const MutationTrace& trace) {
  json header = {{"format", "wasm-shade-trace"},
                 {"version", 1},
                 {"input_digest", hex64(trace.input_digest)},
                 {"output_digest", hex64(trace.output_digest)}};
  std::string out = header.dump();
  out += '\n';
  for (const auto& e : trace.entries) {
    json j = {{"iteration", e.iteration},
              {"kind", mutation_kind_name(e.spec.kind)},
              {"seed", e.spec.seed},
              {"site", e.site},
              {"applied", e.applied}};
    if (!e.spec.rules.empty()) j["rules"] = e.spec.rules;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

uint64_t parse_hex64(const std::string& s) {
  if (s.empty() || s.size() > 16 ||
      s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "trace: bad digest '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

}  // namespace

MutationTrace trace_from_jsonl(std::string_view text) {
  MutationTrace trace;
  bool have_header = false;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(ErrorCode::InvalidArgument, "trace: malformed JSON line");
    if (!have_header) {
      if (j.value("format", "") != "wasm-shade-trace" || j.value("version", 0) != 1)
        throw Error(ErrorCode::InvalidArgument, "trace: unrecognized header");
      trace.input_digest = parse_hex64(j.value("input_digest", ""));
      trace.output_digest = parse_hex64(j.value("output_digest", ""));
      have_header = true;
      continue;
    }
    TraceEntry e;
    if (!j.contains("iteration") || !j.contains("kind") || !j.contains("seed") ||
        !j.contains("applied"))
      throw Error(ErrorCode::InvalidArgument, "trace: entry missing fields");
    e.iteration = j["iteration"].get<uint64_t>();
    auto kind = mutation_kind_from_name(j["kind"].get<std::string>());
    if (!kind)
      throw Error(ErrorCode::InvalidArgument,
                  "trace: unknown kind " + j["kind"].get<std::string>());
    e.spec.kind = *kind;
    e.spec.seed = j["seed"].get<uint64_t>();
    if (j.contains("rules"))
      e.spec.rules = j["rules"].get<std::vector<std::string>>();
    e.site = j.value("site", "");
    e.applied = j["applied"].get<bool>();
    trace.entries.push_back(std::move(e));
  }
  if (!have_header)
    throw Error(ErrorCode::InvalidArgument, "trace: empty input");
  return trace;
}

Module replay_trace(const Module& m, const MutationTrace& trace) {
  if (module_digest(m) != trace.input_digest)
    throw Error(ErrorCode::InvalidArgument,
                "module does not match trace input digest");
  Module cur = m;
  for (const auto& e : trace.entries) {
    auto [next, got] = apply_transformation(cur, e.spec);
    if (got.applied != e.applied)
      throw Error(ErrorCode::InvalidArgument,
                  "replay diverged at iteration " + std::to_string(e.iteration));
    if (got.applied) cur = std::move(next);
  }
  if (module_digest(cur) != trace.output_digest)
    throw Error(ErrorCode::InvalidArgument, "replay output digest mismatch");
  return cur;
}

}  // namespace wasmshade
