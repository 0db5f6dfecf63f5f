#include "wasmshade/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "json.hpp"
#include "wasmshade/binary.hpp"
#include "wasmshade/rng.hpp"
#include "wasmshade/validate.hpp"

namespace wasmshade {

// ---------------------------------------------------------------------------
// Imaging

GrayImage to_grayscale(std::span<const uint8_t> bytes) {
  if (bytes.empty())
    throw Error(ErrorCode::EmptyInput, "cannot image an empty byte string");
  const size_t n = bytes.size();
  size_t w = 1;
  while (w * w < n) ++w;
  GrayImage img;
  for (size_t i = 0; i < GrayImage::kSide; ++i) {
    size_t sr = i * w / GrayImage::kSide;
    for (size_t j = 0; j < GrayImage::kSide; ++j) {
      size_t sc = j * w / GrayImage::kSide;
      size_t idx = sr * w + sc;
      img.pixels[i * GrayImage::kSide + j] = idx < n ? bytes[idx] : 0;
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Features

namespace {

constexpr const char* kFeatureNames[] = {
    "size",           "section_count",     "type_count",
    "function_count", "import_count",      "export_count",
    "memory_count",   "global_count",      "instr_count",
    "instr_arith",    "instr_memory",      "instr_control",
    "instr_call",     "mean_body_len",     "custom_byte_share",
    "import_has_memory", "import_has_env",
};
constexpr size_t kFeatureDim = std::size(kFeatureNames);

}  // namespace

std::span<const char* const> feature_names() {
  return {kFeatureNames, kFeatureDim};
}

FeatureVector extract_features(const Module& m) {
  require_valid(m, "feature extraction");
  std::vector<uint8_t> bytes = encode_module(m);
  FeatureVector f(kFeatureDim, 0.0);
  f[0] = static_cast<double>(bytes.size());
  // Known sections only: appended metadata must not perturb this count.
  uint32_t sections = 0;
  if (!m.types.empty()) ++sections;
  if (!m.imports.empty()) ++sections;
  if (!m.functions.empty()) sections += 2;  // function + code sections
  if (!m.tables.empty()) ++sections;
  if (!m.memories.empty()) ++sections;
  if (!m.globals.empty()) ++sections;
  if (!m.exports.empty()) ++sections;
  if (m.start) ++sections;
  if (!m.elems.empty()) ++sections;
  if (!m.datas.empty()) ++sections;
  f[1] = sections;
  f[2] = static_cast<double>(m.types.size());
  f[3] = static_cast<double>(m.functions.size());
  f[4] = static_cast<double>(m.imports.size());
  f[5] = static_cast<double>(m.exports.size());
  f[6] = static_cast<double>(m.memories.size());
  f[7] = static_cast<double>(m.globals.size());
  uint64_t instrs = 0, arith = 0, mem = 0, control = 0, call = 0;
  for (const Function& fn : m.functions) {
    instrs += fn.body.size();
    for (const Instruction& ins : fn.body) {
      uint8_t v = static_cast<uint8_t>(ins.op);
      if (v >= 0x45) ++arith;                 // tests, numerics, conversions
      else if (v >= 0x28 && v <= 0x40) ++mem; // loads, stores, size/grow
      else if (v <= 0x0F) ++control;
      else if (v == 0x10 || v == 0x11) ++call;
    }
  }
  f[8] = static_cast<double>(instrs);
  f[9] = static_cast<double>(arith);
  f[10] = static_cast<double>(mem);
  f[11] = static_cast<double>(control);
  f[12] = static_cast<double>(call);
  f[13] = m.functions.empty()
              ? 0.0
              : static_cast<double>(instrs) / static_cast<double>(m.functions.size());
  uint64_t custom_bytes = 0;
  for (const CustomSection& c : m.customs)
    custom_bytes += c.name.size() + c.bytes.size();
  f[14] = static_cast<double>(custom_bytes) / f[0];
  for (const Import& im : m.imports) {
    if (im.module.find("memory") != std::string::npos ||
        im.field.find("memory") != std::string::npos)
      f[15] = 1.0;
    if (im.module.find("env") != std::string::npos ||
        im.field.find("env") != std::string::npos)
      f[16] = 1.0;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Corpus loading

LabeledCorpus load_labeled_corpus(const std::string& manifest_path) {
  std::vector<uint8_t> raw = read_file(manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("bad corpus manifest: ") + e.what());
  }
  if (j.is_object() && j.contains("modules")) j = j["modules"];
  if (!j.is_array())
    throw Error(ErrorCode::InvalidArgument,
                "corpus manifest must be a JSON array of {path,label,name}");
  std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  LabeledCorpus corpus;
  for (const auto& e : j) {
    if (!e.is_object())
      throw Error(ErrorCode::InvalidArgument, "corpus entry is not an object");
    std::string rel;
    if (e.contains("path")) rel = e["path"].get<std::string>();
    else if (e.contains("file")) rel = e["file"].get<std::string>();
    else throw Error(ErrorCode::InvalidArgument, "corpus entry lacks a path");
    if (!e.contains("label"))
      throw Error(ErrorCode::InvalidArgument,
                  "corpus entry '" + rel + "' lacks a label");
    std::string label = e["label"].get<std::string>();
    LabeledSample s;
    if (label == "miner") s.miner = true;
    else if (label == "benign") s.miner = false;
    else
      throw Error(ErrorCode::InvalidArgument,
                  "label must be 'miner' or 'benign', got '" + label + "'");
    s.name = e.contains("name") ? e["name"].get<std::string>() : rel;
    s.bytes = read_file((base / rel).string());
    corpus.push_back(std::move(s));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Kinds

std::string_view detector_kind_name(DetectorKind k) {
  switch (k) {
    case DetectorKind::ImageCentroid: return "image-centroid";
    case DetectorKind::ImageLogistic: return "image-logistic";
    case DetectorKind::FeatureNaiveBayes: return "feature-naive-bayes";
    case DetectorKind::FeatureLogistic: return "feature-logistic";
    case DetectorKind::CfgRules: return "cfg-rules";
  }
  return "unknown";
}

std::optional<DetectorKind> detector_kind_from_name(std::string_view name) {
  for (DetectorKind k :
       {DetectorKind::ImageCentroid, DetectorKind::ImageLogistic,
        DetectorKind::FeatureNaiveBayes, DetectorKind::FeatureLogistic,
        DetectorKind::CfgRules})
    if (detector_kind_name(k) == name) return k;
  return std::nullopt;
}

std::string_view op_category_name(OpCategory c) {
  switch (c) {
    case OpCategory::Xor: return "xor";
    case OpCategory::Rotate: return "rotate";
    case OpCategory::Shift: return "shift";
    case OpCategory::AddMul: return "add-mul";
    case OpCategory::Load: return "load";
    case OpCategory::Store: return "store";
    case OpCategory::Other: return "other";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Lifting

namespace {

OpCategory categorize(Opcode op) {
  switch (op) {
    case Opcode::I32Xor:
    case Opcode::I64Xor:
      return OpCategory::Xor;
    case Opcode::I32Rotl:
    case Opcode::I32Rotr:
    case Opcode::I64Rotl:
    case Opcode::I64Rotr:
      return OpCategory::Rotate;
    case Opcode::I32Shl:
    case Opcode::I32ShrS:
    case Opcode::I32ShrU:
    case Opcode::I64Shl:
    case Opcode::I64ShrS:
    case Opcode::I64ShrU:
      return OpCategory::Shift;
    case Opcode::I32Add:
    case Opcode::I32Sub:
    case Opcode::I32Mul:
    case Opcode::I64Add:
    case Opcode::I64Sub:
    case Opcode::I64Mul:
    case Opcode::F32Add:
    case Opcode::F32Sub:
    case Opcode::F32Mul:
    case Opcode::F64Add:
    case Opcode::F64Sub:
    case Opcode::F64Mul:
      return OpCategory::AddMul;
    default: {
      uint8_t v = static_cast<uint8_t>(op);
      if (v >= 0x28 && v <= 0x35) return OpCategory::Load;
      if (v >= 0x36 && v <= 0x3E) return OpCategory::Store;
      return OpCategory::Other;
    }
  }
}

uint8_t operand_arity(Opcode op) {
  uint8_t v = static_cast<uint8_t>(op);
  if (v == 0x1A) return 1;                // drop
  if (v == 0x1B) return 3;                // select
  if (v == 0x20 || v == 0x23) return 0;   // local.get / global.get
  if (v == 0x21 || v == 0x22 || v == 0x24) return 1;
  if (v >= 0x28 && v <= 0x35) return 1;   // loads take an address
  if (v >= 0x36 && v <= 0x3E) return 2;   // stores take address + value
  if (v == 0x3F) return 0;                // memory.size
  if (v == 0x40) return 1;                // memory.grow
  if (v >= 0x41 && v <= 0x44) return 0;   // consts
  if (v == 0x45 || v == 0x50) return 1;   // eqz
  if (v >= 0x46 && v <= 0x66) return 2;   // comparisons
  if (v >= 0x67 && v <= 0x69) return 1;   // i32 clz/ctz/popcnt
  if (v >= 0x6A && v <= 0x78) return 2;   // i32 binary
  if (v >= 0x79 && v <= 0x7B) return 1;   // i64 unary
  if (v >= 0x7C && v <= 0x8A) return 2;   // i64 binary
  if (v >= 0x8B && v <= 0x91) return 1;   // f32 unary
  if (v >= 0x92 && v <= 0x98) return 2;   // f32 binary
  if (v >= 0x99 && v <= 0x9F) return 1;   // f64 unary
  if (v >= 0xA0 && v <= 0xA6) return 2;   // f64 binary
  if (v >= 0xA7) return 1;                // conversions
  return 0;
}

constexpr uint32_t kReturnTarget = UINT32_MAX;

struct LiftFrame {
  enum Kind : uint8_t { Func, Blk, LoopF, IfThen, IfElse } kind;
  uint32_t target = 0;  // br destination: join, or the loop header
  uint32_t join = 0;
  uint32_t cond_block = 0;  // IfThen: block holding the conditional branch
  bool false_edge_pending = false;
};

IRFunction lift_function(const Module& m, const Function& f) {
  IRFunction fn;
  fn.type = m.types[f.type_index];
  auto& blocks = fn.blocks;
  auto new_block = [&] {
    blocks.emplace_back();
    return static_cast<uint32_t>(blocks.size() - 1);
  };
  auto edge = [&](uint32_t from, uint32_t to) {
    blocks[from].succs.push_back(to);
  };
  uint32_t cur = new_block();

  std::vector<LiftFrame> frames;
  frames.push_back({LiftFrame::Func, kReturnTarget, 0, 0, false});
  auto resolve = [&](uint64_t depth) {
    return frames[frames.size() - 1 - static_cast<size_t>(depth)].target;
  };

  // Raw instructions already placed in `cur`, for the counter-pattern match;
  // reset whenever control moves to another block.
  std::vector<const Instruction*> recent;

  for (const Instruction& ins : f.body) {
    switch (ins.op) {
      case Opcode::Block: {
        uint32_t join = new_block();
        frames.push_back({LiftFrame::Blk, join, join, 0, false});
        break;  // entering a block is not a control transfer
      }
      case Opcode::Loop: {
        uint32_t header = new_block();
        uint32_t join = new_block();
        blocks[cur].term = Terminator::Fallthrough;
        edge(cur, header);
        frames.push_back({LiftFrame::LoopF, header, join, 0, false});
        cur = header;
        recent.clear();
        break;
      }
      case Opcode::If: {
        uint32_t then_b = new_block();
        uint32_t join = new_block();
        blocks[cur].term = Terminator::CondBranch;
        edge(cur, then_b);
        frames.push_back({LiftFrame::IfThen, join, join, cur, true});
        cur = then_b;
        recent.clear();
        break;
      }
      case Opcode::Else: {
        LiftFrame& fr = frames.back();
        blocks[cur].term = Terminator::Branch;
        edge(cur, fr.join);  // then-arm jumps past the else-arm
        uint32_t else_b = new_block();
        edge(fr.cond_block, else_b);
        fr.false_edge_pending = false;
        fr.kind = LiftFrame::IfElse;
        cur = else_b;
        recent.clear();
        break;
      }
      case Opcode::End: {
        LiftFrame fr = frames.back();
        frames.pop_back();
        if (fr.kind == LiftFrame::Func) {
          blocks[cur].term = Terminator::Return;
        } else {
          if (fr.kind == LiftFrame::IfThen && fr.false_edge_pending)
            edge(fr.cond_block, fr.join);  // if without else: false falls through
          blocks[cur].term = Terminator::Fallthrough;
          edge(cur, fr.join);
          cur = fr.join;
          recent.clear();
        }
        break;
      }
      case Opcode::Br: {
        uint32_t t = resolve(ins.imm[0]);
        if (t == kReturnTarget) {
          blocks[cur].term = Terminator::Return;
        } else {
          blocks[cur].term = Terminator::Branch;
          edge(cur, t);
        }
        cur = new_block();  // dead continuation
        recent.clear();
        break;
      }
      case Opcode::BrIf: {
        uint32_t t = resolve(ins.imm[0]);
        uint32_t next = new_block();
        blocks[cur].term = Terminator::CondBranch;
        if (t != kReturnTarget && recent.size() >= 3) {
          const Instruction* a = recent[recent.size() - 3];
          const Instruction* b = recent[recent.size() - 2];
          const Instruction* c = recent[recent.size() - 1];
          uint8_t cv = static_cast<uint8_t>(c->op);
          if (a->op == Opcode::LocalGet && b->op == Opcode::I32Const &&
              cv >= 0x46 && cv <= 0x4F)  // i32 comparison
            blocks[cur].cond_bound = {
                t, static_cast<uint64_t>(static_cast<uint32_t>(b->imm[0]))};
        }
        if (t != kReturnTarget) edge(cur, t);
        edge(cur, next);
        cur = next;
        recent.clear();
        break;
      }
      case Opcode::BrTable: {
        blocks[cur].term = Terminator::Switch;
        std::vector<uint32_t> targets;
        for (uint64_t d : ins.imm) {
          uint32_t t = resolve(d);
          if (t != kReturnTarget) targets.push_back(t);
        }
        std::sort(targets.begin(), targets.end());
        targets.erase(std::unique(targets.begin(), targets.end()),
                      targets.end());
        for (uint32_t t : targets) edge(cur, t);
        cur = new_block();
        recent.clear();
        break;
      }
      case Opcode::Return:
        blocks[cur].term = Terminator::Return;
        cur = new_block();
        recent.clear();
        break;
      case Opcode::Unreachable:
        blocks[cur].term = Terminator::Unreachable;
        cur = new_block();
        recent.clear();
        break;
      case Opcode::Call:
        blocks[cur].calls.push_back(static_cast<uint32_t>(ins.imm[0]));
        recent.push_back(&ins);
        break;
      case Opcode::CallIndirect:
        blocks[cur].indirect_sigs.push_back(
            m.types[static_cast<uint32_t>(ins.imm[0])]);
        recent.push_back(&ins);
        break;
      default:
        blocks[cur].ops.push_back({categorize(ins.op), operand_arity(ins.op)});
        recent.push_back(&ins);
        break;
    }
  }
  return fn;
}

}  // namespace

IRProgram lift_to_ir(const Module& m) {
  require_valid(m, "ir lifting");
  IRProgram p;
  for (const Import& im : m.imports)
    if (im.kind == ExternalKind::Func) {
      IRFunction fn;
      fn.type = m.types[im.type_index];
      p.functions.push_back(std::move(fn));
    }
  for (const Function& f : m.functions)
    p.functions.push_back(lift_function(m, f));
  for (const ElemSegment& e : m.elems)
    p.table_entries.insert(p.table_entries.end(), e.func_indices.begin(),
                           e.func_indices.end());
  std::sort(p.table_entries.begin(), p.table_entries.end());
  p.table_entries.erase(
      std::unique(p.table_entries.begin(), p.table_entries.end()),
      p.table_entries.end());
  return p;
}

ICFG build_icfg(const IRProgram& p) {
  ICFG g;
  std::vector<uint32_t> base(p.functions.size(), 0);
  uint32_t total = 0;
  for (size_t f = 0; f < p.functions.size(); ++f) {
    base[f] = total;
    total += static_cast<uint32_t>(p.functions[f].blocks.size());
  }
  g.nodes.reserve(total);
  g.edges.resize(total);
  for (size_t f = 0; f < p.functions.size(); ++f) {
    const auto& blocks = p.functions[f].blocks;
    for (size_t b = 0; b < blocks.size(); ++b) {
      const IRBlock& blk = blocks[b];
      ICFG::Node node;
      node.func = static_cast<uint32_t>(f);
      node.block = static_cast<uint32_t>(b);
      for (const IROp& op : blk.ops) {
        if (op.category == OpCategory::Xor || op.category == OpCategory::Rotate ||
            op.category == OpCategory::Shift)
          ++node.xor_rot_shift;
        if (op.category == OpCategory::Load || op.category == OpCategory::Store)
          ++node.mem_ops;
      }
      node.cond = blk.term == Terminator::CondBranch;
      if (blk.cond_bound)
        node.cond_bound = {base[f] + blk.cond_bound->first,
                           blk.cond_bound->second};
      uint32_t id = base[f] + static_cast<uint32_t>(b);
      auto& out = g.edges[id];
      for (uint32_t s : blk.succs) out.push_back(base[f] + s);
      for (uint32_t callee : blk.calls)
        if (callee < p.functions.size() && !p.functions[callee].blocks.empty())
          out.push_back(base[callee]);
      for (const FuncType& sig : blk.indirect_sigs)
        for (uint32_t te : p.table_entries)
          if (te < p.functions.size() && p.functions[te].type == sig &&
              !p.functions[te].blocks.empty())
            out.push_back(base[te]);
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      g.nodes.push_back(node);
    }
  }

  // Loop headers: targets of depth-first back edges, function entries first
  // so intraprocedural headers are classified from their natural roots.
  std::vector<uint8_t> color(total, 0);  // 0 new, 1 on path, 2 done
  auto dfs = [&](uint32_t root) {
    if (color[root] != 0) return;
    std::vector<std::pair<uint32_t, size_t>> stack;
    stack.push_back({root, 0});
    color[root] = 1;
    while (!stack.empty()) {
      uint32_t v = stack.back().first;
      if (stack.back().second < g.edges[v].size()) {
        uint32_t w = g.edges[v][stack.back().second];
        ++stack.back().second;
        if (color[w] == 0) {
          color[w] = 1;
          stack.push_back({w, 0});
        } else if (color[w] == 1) {
          g.nodes[w].loop_header = true;
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  };
  for (size_t f = 0; f < p.functions.size(); ++f)
    if (!p.functions[f].blocks.empty()) dfs(base[f]);
  for (uint32_t v = 0; v < total; ++v) dfs(v);
  return g;
}

Verdict detect_mining_rules(const ICFG& g, const RuleThresholds& rules,
                            double threshold) {
  const size_t n = g.nodes.size();
  constexpr uint32_t kNone = UINT32_MAX;

  // Strongly connected components, iterative Tarjan.
  std::vector<uint32_t> idx(n, kNone), low(n, 0), comp(n, kNone);
  std::vector<uint8_t> on_stack(n, 0);
  std::vector<uint32_t> stk;
  std::vector<std::vector<uint32_t>> sccs;
  uint32_t counter = 0;
  struct Frame {
    uint32_t v;
    size_t ei;
  };
  for (uint32_t root = 0; root < n; ++root) {
    if (idx[root] != kNone) continue;
    std::vector<Frame> call;
    call.push_back({root, 0});
    idx[root] = low[root] = counter++;
    stk.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      uint32_t v = call.back().v;
      if (call.back().ei < g.edges[v].size()) {
        uint32_t w = g.edges[v][call.back().ei];
        ++call.back().ei;
        if (idx[w] == kNone) {
          idx[w] = low[w] = counter++;
          stk.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], idx[w]);
        }
      } else {
        if (low[v] == idx[v]) {
          std::vector<uint32_t> scc;
          uint32_t w;
          do {
            w = stk.back();
            stk.pop_back();
            on_stack[w] = 0;
            comp[w] = static_cast<uint32_t>(sccs.size());
            scc.push_back(w);
          } while (w != v);
          std::sort(scc.begin(), scc.end());
          sccs.push_back(std::move(scc));
        }
        call.pop_back();
        if (!call.empty())
          low[call.back().v] = std::min(low[call.back().v], low[v]);
      }
    }
  }

  int best_groups = -1;
  uint32_t best_xr = 0, best_mem = 0, best_node = 0;
  uint64_t best_trip = 0;
  bool best_unbounded = false;
  size_t best_size = 0;
  for (const auto& scc : sccs) {
    bool cyclic = scc.size() > 1;
    if (!cyclic) {
      uint32_t v = scc[0];
      cyclic = std::binary_search(g.edges[v].begin(), g.edges[v].end(), v);
    }
    if (!cyclic) continue;
    uint32_t cid = comp[scc[0]];
    uint32_t xr = 0, mem = 0;
    for (uint32_t v : scc) {
      xr += g.nodes[v].xor_rot_shift;
      mem += g.nodes[v].mem_ops;
    }
    // Iteration potential: counter patterns on branches that control the
    // cycle (an exit branch, or a conditional back edge into a header).
    // Comparing against 0 bounds nothing — the count is the unknown initial
    // value — and a cycle with no recognizable pattern is unbounded too.
    bool unbounded_pattern = false, any_bound = false;
    uint64_t bound = 0;
    for (uint32_t v : scc) {
      if (!g.nodes[v].cond || !g.nodes[v].cond_bound) continue;
      auto [t, k] = *g.nodes[v].cond_bound;
      bool exits = false;
      for (uint32_t w : g.edges[v])
        if (comp[w] != cid) {
          exits = true;
          break;
        }
      bool back = comp[t] == cid && g.nodes[t].loop_header;
      if (!exits && !back) continue;
      if (k == 0) unbounded_pattern = true;
      else {
        any_bound = true;
        bound = std::max(bound, k);
      }
    }
    bool unbounded = unbounded_pattern || !any_bound;
    uint64_t trip = unbounded ? UINT64_MAX : bound;
    int groups = (xr >= rules.xor_ops) + (mem >= rules.mem_ops) +
                 (trip >= rules.trip);
    if (groups > best_groups) {
      best_groups = groups;
      best_xr = xr;
      best_mem = mem;
      best_trip = trip;
      best_unbounded = unbounded;
      best_node = scc[0];
      best_size = scc.size();
    }
  }

  Verdict v;
  if (best_groups < 0) {
    v.evidence = "no cycles";
    return v;
  }
  v.miner_probability = best_groups / 3.0;
  v.miner = v.miner_probability >= threshold;
  char buf[224];
  const ICFG::Node& bn = g.nodes[best_node];
  if (best_unbounded)
    std::snprintf(buf, sizeof buf,
                  "cycle at func %u block %u (%zu blocks): xor/rot/shift %u/%u, "
                  "mem %u/%u, trip unbounded/%u -> %d/3 groups",
                  bn.func, bn.block, best_size, best_xr, rules.xor_ops,
                  best_mem, rules.mem_ops, rules.trip, best_groups);
  else
    std::snprintf(buf, sizeof buf,
                  "cycle at func %u block %u (%zu blocks): xor/rot/shift %u/%u, "
                  "mem %u/%u, trip %llu/%u -> %d/3 groups",
                  bn.func, bn.block, best_size, best_xr, rules.xor_ops,
                  best_mem, rules.mem_ops,
                  static_cast<unsigned long long>(best_trip), rules.trip,
                  best_groups);
  v.evidence = buf;
  return v;
}

// ---------------------------------------------------------------------------
// Training

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr size_t kPixels = GrayImage::kSide * GrayImage::kSide;

struct Prepared {
  std::vector<Module> modules;
  std::vector<int> labels;  // 1 = miner
  uint64_t digest = 0;
};

Prepared prepare_corpus(const LabeledCorpus& corpus) {
  Prepared p;
  bool any_miner = false, any_benign = false;
  uint64_t state = kFnvOffsetBasis;
  for (const LabeledSample& s : corpus) {
    Module m = parse_module(s.bytes);
    std::vector<uint8_t> norm = encode_module(m);
    state = fnv1a64(norm, state);
    uint8_t lb = s.miner ? 1 : 0;
    state = fnv1a64(std::span<const uint8_t>(&lb, 1), state);
    (s.miner ? any_miner : any_benign) = true;
    p.modules.push_back(std::move(m));
    p.labels.push_back(s.miner ? 1 : 0);
  }
  if (!any_miner || !any_benign)
    throw Error(ErrorCode::DegenerateCorpus,
                "training corpus must contain both miner and benign samples");
  p.digest = state;
  return p;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void fit_logistic(const std::vector<std::vector<double>>& X,
                  const std::vector<int>& y, uint64_t seed, uint32_t epochs,
                  double lr, std::vector<double>& w, double& b) {
  const size_t n = X.size(), d = X[0].size();
  Rng rng(seed);
  w.assign(d, 0.0);
  for (double& wi : w) wi = (rng.next() * 0x1.0p-64 * 2.0 - 1.0) * 0.01;
  b = 0.0;
  std::vector<double> grad(d);
  for (uint32_t e = 0; e < epochs; ++e) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double z = b;
      for (size_t k = 0; k < d; ++k) z += w[k] * X[i][k];
      double err = sigmoid(z) - y[i];
      gb += err;
      for (size_t k = 0; k < d; ++k) grad[k] += err * X[i][k];
    }
    double step = lr / static_cast<double>(n);
    for (size_t k = 0; k < d; ++k) w[k] -= step * grad[k];
    b -= step * gb;
  }
}

std::vector<uint32_t> checked_subset(const std::vector<uint32_t>& subset) {
  std::vector<uint32_t> seen;
  for (uint32_t i : subset) {
    if (i >= kFeatureDim)
      throw Error(ErrorCode::InvalidArgument,
                  "feature subset index " + std::to_string(i) +
                      " out of range (dim " + std::to_string(kFeatureDim) + ")");
    if (std::find(seen.begin(), seen.end(), i) != seen.end())
      throw Error(ErrorCode::InvalidArgument,
                  "feature subset repeats index " + std::to_string(i));
    seen.push_back(i);
  }
  return seen;
}

FeatureVector apply_subset(const std::vector<uint32_t>& subset,
                           const FeatureVector& f) {
  if (subset.empty()) return f;
  FeatureVector out;
  out.reserve(subset.size());
  for (uint32_t i : subset) {
    if (i >= f.size())
      throw Error(ErrorCode::KindMismatch, "feature subset index out of range");
    out.push_back(f[i]);
  }
  return out;
}

double log_gauss(double x, double mu, double var) {
  return -0.5 * std::log(2.0 * kPi * var) - (x - mu) * (x - mu) / (2.0 * var);
}

}  // namespace

DetectorModel train_image_detector(const LabeledCorpus& corpus,
                                   DetectorKind kind, uint64_t seed,
                                   const TrainOptions& opts) {
  if (kind != DetectorKind::ImageCentroid && kind != DetectorKind::ImageLogistic)
    throw Error(ErrorCode::KindMismatch,
                "train_image_detector handles image kinds only");
  Prepared p = prepare_corpus(corpus);
  const size_t n = p.modules.size();
  std::vector<std::vector<double>> X(n, std::vector<double>(kPixels));
  for (size_t i = 0; i < n; ++i) {
    GrayImage img = to_grayscale(encode_module(p.modules[i]));
    for (size_t k = 0; k < kPixels; ++k) X[i][k] = img.pixels[k] / 255.0;
  }
  DetectorModel model;
  model.kind = kind;
  model.seed = seed;
  model.corpus_digest = p.digest;
  if (kind == DetectorKind::ImageCentroid) {
    model.centroid_miner.assign(kPixels, 0.0);
    model.centroid_benign.assign(kPixels, 0.0);
    size_t nm = 0, nb = 0;
    for (size_t i = 0; i < n; ++i) {
      auto& acc = p.labels[i] ? model.centroid_miner : model.centroid_benign;
      (p.labels[i] ? nm : nb) += 1;
      for (size_t k = 0; k < kPixels; ++k) acc[k] += X[i][k];
    }
    for (size_t k = 0; k < kPixels; ++k) {
      model.centroid_miner[k] /= static_cast<double>(nm);
      model.centroid_benign[k] /= static_cast<double>(nb);
    }
  } else {
    double lr = opts.learning_rate > 0 ? opts.learning_rate : 1.0;
    fit_logistic(X, p.labels, seed, opts.epochs, lr, model.weights, model.bias);
  }
  return model;
}

DetectorModel train_feature_detector(const LabeledCorpus& corpus,
                                     DetectorKind kind, uint64_t seed,
                                     const TrainOptions& opts) {
  if (kind != DetectorKind::FeatureNaiveBayes &&
      kind != DetectorKind::FeatureLogistic)
    throw Error(ErrorCode::KindMismatch,
                "train_feature_detector handles feature kinds only");
  Prepared p = prepare_corpus(corpus);
  std::vector<uint32_t> subset = checked_subset(opts.feature_subset);
  const size_t n = p.modules.size();
  std::vector<std::vector<double>> F(n);
  for (size_t i = 0; i < n; ++i)
    F[i] = apply_subset(subset, extract_features(p.modules[i]));
  const size_t d = F[0].size();

  DetectorModel model;
  model.kind = kind;
  model.seed = seed;
  model.corpus_digest = p.digest;
  model.feature_subset = subset;

  if (kind == DetectorKind::FeatureNaiveBayes) {
    size_t nm = 0, nb = 0;
    model.nb_mean_miner.assign(d, 0.0);
    model.nb_mean_benign.assign(d, 0.0);
    model.nb_var_miner.assign(d, 0.0);
    model.nb_var_benign.assign(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
      auto& mean = p.labels[i] ? model.nb_mean_miner : model.nb_mean_benign;
      (p.labels[i] ? nm : nb) += 1;
      for (size_t k = 0; k < d; ++k) mean[k] += F[i][k];
    }
    for (size_t k = 0; k < d; ++k) {
      model.nb_mean_miner[k] /= static_cast<double>(nm);
      model.nb_mean_benign[k] /= static_cast<double>(nb);
    }
    for (size_t i = 0; i < n; ++i) {
      auto& mean = p.labels[i] ? model.nb_mean_miner : model.nb_mean_benign;
      auto& var = p.labels[i] ? model.nb_var_miner : model.nb_var_benign;
      for (size_t k = 0; k < d; ++k) {
        double diff = F[i][k] - mean[k];
        var[k] += diff * diff;
      }
    }
    for (size_t k = 0; k < d; ++k) {
      model.nb_var_miner[k] =
          std::max(model.nb_var_miner[k] / static_cast<double>(nm),
                   opts.variance_floor);
      model.nb_var_benign[k] =
          std::max(model.nb_var_benign[k] / static_cast<double>(nb),
                   opts.variance_floor);
    }
    model.nb_prior_miner = static_cast<double>(nm) / static_cast<double>(n);
  } else {
    model.feat_mean.assign(d, 0.0);
    model.feat_stdev.assign(d, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < d; ++k) model.feat_mean[k] += F[i][k];
    for (size_t k = 0; k < d; ++k) model.feat_mean[k] /= static_cast<double>(n);
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < d; ++k) {
        double diff = F[i][k] - model.feat_mean[k];
        model.feat_stdev[k] += diff * diff;
      }
    for (size_t k = 0; k < d; ++k) {
      model.feat_stdev[k] = std::sqrt(model.feat_stdev[k] / static_cast<double>(n));
      // a constant feature carries no signal; unit scale keeps z finite
      if (model.feat_stdev[k] < 1e-9) model.feat_stdev[k] = 1.0;
    }
    std::vector<std::vector<double>> Z(n, std::vector<double>(d));
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < d; ++k)
        Z[i][k] = (F[i][k] - model.feat_mean[k]) / model.feat_stdev[k];
    double lr = opts.learning_rate > 0 ? opts.learning_rate : 0.5;
    fit_logistic(Z, p.labels, seed, opts.epochs, lr, model.weights, model.bias);
  }
  return model;
}

DetectorModel make_cfg_rules_model(const RuleThresholds& rules) {
  DetectorModel model;
  model.kind = DetectorKind::CfgRules;
  model.rules = rules;
  return model;
}

// ---------------------------------------------------------------------------
// Prediction

Verdict predict(const DetectorModel& model, const Module& m, double threshold) {
  require_valid(m, "detector input");
  Verdict v;
  char buf[192];
  switch (model.kind) {
    case DetectorKind::ImageCentroid: {
      if (model.centroid_miner.size() != kPixels ||
          model.centroid_benign.size() != kPixels)
        throw Error(ErrorCode::KindMismatch,
                    "centroid model does not match the image pipeline");
      GrayImage img = to_grayscale(encode_module(m));
      double dm = 0, db = 0;
      for (size_t k = 0; k < kPixels; ++k) {
        double x = img.pixels[k] / 255.0;
        dm += (x - model.centroid_miner[k]) * (x - model.centroid_miner[k]);
        db += (x - model.centroid_benign[k]) * (x - model.centroid_benign[k]);
      }
      dm = std::sqrt(dm);
      db = std::sqrt(db);
      double wm = std::pow(dm + 1e-9, -model.sharpness);
      double wb = std::pow(db + 1e-9, -model.sharpness);
      if (std::isinf(wm) || std::isinf(wb))
        v.miner_probability = std::isinf(wm) == std::isinf(wb) ? 0.5
                              : std::isinf(wm)                 ? 1.0
                                                               : 0.0;
      else
        v.miner_probability = wm / (wm + wb);
      std::snprintf(buf, sizeof buf,
                    "centroid distances: miner %.6f, benign %.6f", dm, db);
      v.evidence = buf;
      break;
    }
    case DetectorKind::ImageLogistic: {
      if (model.weights.size() != kPixels)
        throw Error(ErrorCode::KindMismatch,
                    "image-logistic model does not match the image pipeline");
      GrayImage img = to_grayscale(encode_module(m));
      double z = model.bias;
      for (size_t k = 0; k < kPixels; ++k)
        z += model.weights[k] * (img.pixels[k] / 255.0);
      v.miner_probability = sigmoid(z);
      std::snprintf(buf, sizeof buf, "logit %.6f", z);
      v.evidence = buf;
      break;
    }
    case DetectorKind::FeatureNaiveBayes: {
      FeatureVector x = apply_subset(model.feature_subset, extract_features(m));
      const size_t d = x.size();
      if (model.nb_mean_miner.size() != d || model.nb_var_miner.size() != d ||
          model.nb_mean_benign.size() != d || model.nb_var_benign.size() != d)
        throw Error(ErrorCode::KindMismatch,
                    "naive-bayes model does not match the feature set");
      for (size_t k = 0; k < d; ++k)
        if (model.nb_var_miner[k] <= 0 || model.nb_var_benign[k] <= 0)
          throw Error(ErrorCode::KindMismatch,
                      "naive-bayes model has a non-positive variance");
      double lm = std::log(model.nb_prior_miner);
      double lb = std::log(1.0 - model.nb_prior_miner);
      size_t top = 0;
      double top_abs = -1.0;
      for (size_t k = 0; k < d; ++k) {
        double gm = log_gauss(x[k], model.nb_mean_miner[k], model.nb_var_miner[k]);
        double gb = log_gauss(x[k], model.nb_mean_benign[k], model.nb_var_benign[k]);
        lm += gm;
        lb += gb;
        if (std::fabs(gm - gb) > top_abs) {
          top_abs = std::fabs(gm - gb);
          top = k;
        }
      }
      v.miner_probability = 1.0 / (1.0 + std::exp(lb - lm));
      size_t name_idx = model.feature_subset.empty() ? top : model.feature_subset[top];
      std::snprintf(buf, sizeof buf, "log-odds %.3f; strongest: %s",
                    lm - lb, kFeatureNames[name_idx]);
      v.evidence = buf;
      break;
    }
    case DetectorKind::FeatureLogistic: {
      FeatureVector x = apply_subset(model.feature_subset, extract_features(m));
      const size_t d = x.size();
      if (model.weights.size() != d || model.feat_mean.size() != d ||
          model.feat_stdev.size() != d)
        throw Error(ErrorCode::KindMismatch,
                    "feature-logistic model does not match the feature set");
      double z = model.bias;
      size_t top = 0;
      double top_abs = -1.0;
      for (size_t k = 0; k < d; ++k) {
        double c = model.weights[k] *
                   ((x[k] - model.feat_mean[k]) / model.feat_stdev[k]);
        z += c;
        if (std::fabs(c) > top_abs) {
          top_abs = std::fabs(c);
          top = k;
        }
      }
      v.miner_probability = sigmoid(z);
      size_t name_idx = model.feature_subset.empty() ? top : model.feature_subset[top];
      std::snprintf(buf, sizeof buf, "logit %.6f; strongest: %s",
                    z, kFeatureNames[name_idx]);
      v.evidence = buf;
      break;
    }
    case DetectorKind::CfgRules:
      return detect_mining_rules(build_icfg(lift_to_ir(m)), model.rules,
                                 threshold);
    default:
      throw Error(ErrorCode::KindMismatch, "unknown detector kind");
  }
  v.miner = v.miner_probability >= threshold;
  return v;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

uint64_t hex_to_u64(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw Error(ErrorCode::InvalidArgument,
                "expected a 16-digit lowercase hex value, got '" + s + "'");
  return std::strtoull(s.c_str(), nullptr, 16);
}

}  // namespace

std::string model_to_json(const DetectorModel& model) {
  nlohmann::json j;
  j["format"] = "wasm-shade-detector";
  j["version"] = model.version;
  j["kind"] = std::string(detector_kind_name(model.kind));
  j["seed"] = model.seed;
  j["corpus_digest"] = hex64(model.corpus_digest);
  nlohmann::json params = nlohmann::json::object();
  switch (model.kind) {
    case DetectorKind::ImageCentroid:
      params["centroid_miner"] = model.centroid_miner;
      params["centroid_benign"] = model.centroid_benign;
      params["sharpness"] = model.sharpness;
      break;
    case DetectorKind::ImageLogistic:
      params["weights"] = model.weights;
      params["bias"] = model.bias;
      break;
    case DetectorKind::FeatureNaiveBayes:
      params["mean_miner"] = model.nb_mean_miner;
      params["var_miner"] = model.nb_var_miner;
      params["mean_benign"] = model.nb_mean_benign;
      params["var_benign"] = model.nb_var_benign;
      params["prior_miner"] = model.nb_prior_miner;
      params["feature_subset"] = model.feature_subset;
      break;
    case DetectorKind::FeatureLogistic:
      params["weights"] = model.weights;
      params["bias"] = model.bias;
      params["mean"] = model.feat_mean;
      params["stdev"] = model.feat_stdev;
      params["feature_subset"] = model.feature_subset;
      break;
    case DetectorKind::CfgRules:
      params["r_xor"] = model.rules.xor_ops;
      params["r_mem"] = model.rules.mem_ops;
      params["r_iter"] = model.rules.trip;
      break;
  }
  j["params"] = params;
  return j.dump(2) + "\n";
}

DetectorModel model_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != "wasm-shade-detector")
      throw Error(ErrorCode::InvalidArgument, "not a detector model file");
    DetectorModel model;
    model.version = j.at("version").get<uint32_t>();
    if (model.version != 1)
      throw Error(ErrorCode::InvalidArgument,
                  "unsupported model version " + std::to_string(model.version));
    auto kind = detector_kind_from_name(j.at("kind").get<std::string>());
    if (!kind)
      throw Error(ErrorCode::InvalidArgument,
                  "unknown detector kind '" + j.at("kind").get<std::string>() + "'");
    model.kind = *kind;
    model.seed = j.at("seed").get<uint64_t>();
    model.corpus_digest = hex_to_u64(j.at("corpus_digest").get<std::string>());
    const nlohmann::json& params = j.at("params");
    switch (model.kind) {
      case DetectorKind::ImageCentroid:
        model.centroid_miner = params.at("centroid_miner").get<std::vector<double>>();
        model.centroid_benign = params.at("centroid_benign").get<std::vector<double>>();
        model.sharpness = params.at("sharpness").get<double>();
        break;
      case DetectorKind::ImageLogistic:
        model.weights = params.at("weights").get<std::vector<double>>();
        model.bias = params.at("bias").get<double>();
        break;
      case DetectorKind::FeatureNaiveBayes:
        model.nb_mean_miner = params.at("mean_miner").get<std::vector<double>>();
        model.nb_var_miner = params.at("var_miner").get<std::vector<double>>();
        model.nb_mean_benign = params.at("mean_benign").get<std::vector<double>>();
        model.nb_var_benign = params.at("var_benign").get<std::vector<double>>();
        model.nb_prior_miner = params.at("prior_miner").get<double>();
        model.feature_subset = params.at("feature_subset").get<std::vector<uint32_t>>();
        break;
      case DetectorKind::FeatureLogistic:
        model.weights = params.at("weights").get<std::vector<double>>();
        model.bias = params.at("bias").get<double>();
        model.feat_mean = params.at("mean").get<std::vector<double>>();
        model.feat_stdev = params.at("stdev").get<std::vector<double>>();
        model.feature_subset = params.at("feature_subset").get<std::vector<uint32_t>>();
        break;
      case DetectorKind::CfgRules:
        model.rules.xor_ops = params.at("r_xor").get<uint32_t>();
        model.rules.mem_ops = params.at("r_mem").get<uint32_t>();
        model.rules.trip = params.at("r_iter").get<uint32_t>();
        break;
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("bad detector model: ") + e.what());
  }
}

}  // namespace wasmshade
