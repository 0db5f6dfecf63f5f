// Property tests for the transformation engine: every kind must preserve
// observable behaviour on the whole fixture corpus, outputs must validate,
// and traces must replay bit-exactly.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"
#include "test_util.hpp"
#include "wasmshade/binary.hpp"
#include "wasmshade/interp.hpp"
#include "wasmshade/mutate.hpp"
#include "wasmshade/validate.hpp"

using namespace wasmshade;

namespace {

struct Fixture {
  std::string file;
  Module m;
  std::vector<SuiteCase> suite;
};

const std::vector<Fixture>& corpus() {
  static const std::vector<Fixture> fixtures = [] {
    std::vector<Fixture> out;
    auto manifest = nlohmann::json::parse(
        testutil::slurp(testutil::corpus_dir() + "/manifest.json"));
    for (const auto& e : manifest["modules"]) {
      Fixture fx;
      fx.file = e["file"];
      fx.m = parse_module(read_file(testutil::corpus_dir() + "/" + fx.file));
      fx.suite = make_differential_suite(fx.m);
      out.push_back(std::move(fx));
    }
    return out;
  }();
  return fixtures;
}

Module one_func(FuncType type, InstrSeq body,
                std::vector<ValType> locals = {}) {
  Module m;
  m.types.push_back(std::move(type));
  Function f;
  f.type_index = 0;
  f.locals = std::move(locals);
  f.body = std::move(body);
  f.body.push_back(make_instr(Opcode::End));
  m.functions.push_back(std::move(f));
  m.exports.push_back({"f", ExternalKind::Func, 0});
  return m;
}

Value invoke1(const Module& m, std::vector<Value> args) {
  Instance inst(m);
  auto r = inst.invoke("f", args);
  REQUIRE(r.outcome == ExecResult::Outcome::Values);
  REQUIRE(r.values.size() == 1);
  return r.values[0];
}

// Runs `spec.kind` with increasing seeds until the applied site descriptor
// contains `tag`; the engine picks sites uniformly, so any present form
// shows up within a few dozen draws.
std::pair<Module, TraceEntry> apply_until(const Module& m, MutationKind kind,
                                          const std::string& tag,
                                          std::vector<std::string> rules = {}) {
  for (uint64_t seed = 0; seed < 400; ++seed) {
    auto [mut, entry] = apply_transformation(m, {kind, seed, rules});
    if (entry.applied && entry.site.find(tag) != std::string::npos)
      return {std::move(mut), std::move(entry)};
  }
  FAIL("no seed in [0, 400) applied a '", tag, "' site");
  return {m, {}};
}

}  // namespace

TEST_CASE("kind names round-trip") {
  for (MutationKind k : kAllMutationKinds) {
    auto back = mutation_kind_from_name(mutation_kind_name(k));
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK_FALSE(mutation_kind_from_name("loop-unswitch").has_value());
}

TEST_CASE("every kind preserves observable behaviour across the corpus") {
  // The heavyweight guarantee: 200 seeded applications of each kind against
  // each corpus module, each one differentially checked when it applied.
  for (const auto& fx : corpus()) {
    for (MutationKind kind : kAllMutationKinds) {
      int applied = 0;
      for (uint64_t seed = 0; seed < 200; ++seed) {
        auto [mut, entry] = apply_transformation(fx.m, {kind, seed, {}});
        if (!entry.applied) {
          CHECK(mut == fx.m);
          continue;
        }
        ++applied;
        auto vr = validate(mut);
        if (!vr.ok()) {
          INFO(fx.file << " " << mutation_kind_name(kind) << " seed " << seed
                       << ": " << vr.summary());
          REQUIRE(vr.ok());
        }
        auto dr = differential_check(fx.m, mut, fx.suite);
        if (!dr.equivalent) {
          INFO(fx.file << " " << mutation_kind_name(kind) << " seed " << seed
                       << " site '" << entry.site << "': " << dr.detail);
          REQUIRE(dr.equivalent);
        }
      }
      // Everything except removal always has a site on these fixtures (the
      // corpus ships without dead items; removal sites only appear after
      // additive mutations).
      if (kind != MutationKind::RemoveItem) {
        INFO(fx.file << " " << mutation_kind_name(kind));
        CHECK(applied == 200);
      }
    }
  }
}

TEST_CASE("transformations are deterministic in (module, spec)") {
  for (size_t i : {size_t{1}, size_t{7}, size_t{13}}) {
    const auto& fx = corpus().at(i);
    for (MutationKind kind : kAllMutationKinds) {
      for (uint64_t seed : {9ull, 77ull}) {
        auto r1 = apply_transformation(fx.m, {kind, seed, {}});
        auto r2 = apply_transformation(fx.m, {kind, seed, {}});
        CHECK(encode_module(r1.first) == encode_module(r2.first));
        CHECK(r1.second == r2.second);
      }
    }
  }
}

TEST_CASE("additive kinds strictly grow the encoding, removal never does") {
  for (const auto& fx : corpus()) {
    size_t base = encode_module(fx.m).size();
    for (uint64_t seed = 0; seed < 20; ++seed) {
      for (MutationKind kind :
           {MutationKind::AddFunction, MutationKind::AddType,
            MutationKind::AddCustomSection}) {
        auto [mut, entry] = apply_transformation(fx.m, {kind, seed, {}});
        INFO(fx.file << " " << mutation_kind_name(kind) << " seed " << seed);
        REQUIRE(entry.applied);
        CHECK(encode_module(mut).size() > base);
      }
      auto [mut, entry] =
          apply_transformation(fx.m, {MutationKind::RemoveItem, seed, {}});
      CHECK(encode_module(mut).size() <= base);
    }
  }
}

TEST_CASE("inapplicable transformations return the module unchanged") {
  Module empty;  // no sections at all; still a valid module
  REQUIRE(validate(empty).ok());
  for (MutationKind kind : {MutationKind::Peephole, MutationKind::CodeMotion,
                            MutationKind::RemoveItem}) {
    auto [mut, entry] = apply_transformation(empty, {kind, 5, {}});
    CHECK_FALSE(entry.applied);
    CHECK(entry.site == "none");
    CHECK(mut == empty);
  }
  auto [grown, entry] =
      apply_transformation(empty, {MutationKind::AddType, 5, {}});
  CHECK(entry.applied);
  CHECK(grown.types.size() == 1);
}

TEST_CASE("operand swap reorders the two pure operand subtrees") {
  Module m = one_func({{ValType::I32, ValType::I32}, {ValType::I32}},
                      {make_instr(Opcode::LocalGet, 0),
                       make_instr(Opcode::LocalGet, 1),
                       make_instr(Opcode::I32Add)});
  auto [mut, entry] =
      apply_until(m, MutationKind::Peephole, "operand-swap", {"operand-swap"});
  const InstrSeq& body = mut.functions[0].body;
  REQUIRE(body.size() == 4);
  CHECK(body[0] == make_instr(Opcode::LocalGet, 1));
  CHECK(body[1] == make_instr(Opcode::LocalGet, 0));
  CHECK(body[2].op == Opcode::I32Add);
  auto suite = make_differential_suite(m);
  CHECK(differential_check(m, mut, suite).equivalent);

  // Nested subtree: (a - b) + (b - a) swaps whole subtrees, not single ops.
  Module n = one_func({{ValType::I32, ValType::I32}, {ValType::I32}},
                      {make_instr(Opcode::LocalGet, 0),
                       make_instr(Opcode::LocalGet, 1),
                       make_instr(Opcode::I32Sub),
                       make_instr(Opcode::LocalGet, 1),
                       make_instr(Opcode::LocalGet, 0),
                       make_instr(Opcode::I32Sub),
                       make_instr(Opcode::I32Add)});
  auto [mut2, e2] =
      apply_until(n, MutationKind::Peephole, "instr 6", {"operand-swap"});
  const InstrSeq& b2 = mut2.functions[0].body;
  REQUIRE(b2.size() == 8);
  CHECK(b2[0] == make_instr(Opcode::LocalGet, 1));
  CHECK(b2[2].op == Opcode::I32Sub);
  CHECK(b2[3] == make_instr(Opcode::LocalGet, 0));
  CHECK(differential_check(n, mut2, make_differential_suite(n)).equivalent);
}

TEST_CASE("operand swap refuses impure subtrees") {
  // One operand comes from memory: reordering could move a trap, so the
  // site list must be empty and the transformation must report unapplied.
  Module m = one_func({{ValType::I32}, {ValType::I32}},
                      {i32_const(0), make_instr(Opcode::I32Load, 2, 0),
                       make_instr(Opcode::LocalGet, 0),
                       make_instr(Opcode::I32Add)});
  m.memories.push_back({{1, 1}});
  REQUIRE(validate(m).ok());
  auto [mut, entry] =
      apply_transformation(m, {MutationKind::Peephole, 3, {"operand-swap"}});
  CHECK_FALSE(entry.applied);
  CHECK(mut == m);
}

TEST_CASE("identity insertions wrap the just-produced value") {
  Module m = one_func({{ValType::I32}, {ValType::I32}},
                      {make_instr(Opcode::LocalGet, 0)});
  auto check_shape = [&](const char* rule, Opcode op, int32_t constant) {
    auto [mut, entry] = apply_until(m, MutationKind::Peephole, rule, {rule});
    const InstrSeq& body = mut.functions[0].body;
    REQUIRE(body.size() == 4);
    CHECK(body[1] == i32_const(constant));
    CHECK(body[2].op == op);
    CHECK(invoke1(mut, {Value::make_i32(41)}).as_i32() == 41);
  };
  check_shape("add-zero", Opcode::I32Add, 0);
  check_shape("xor-zero", Opcode::I32Xor, 0);
  check_shape("mul-one", Opcode::I32Mul, 1);

  auto [sel, se] =
      apply_until(m, MutationKind::Peephole, "select-wrap", {"select-wrap"});
  const InstrSeq& sb = sel.functions[0].body;
  REQUIRE(sb.size() == 5);
  CHECK(sb[1].op == Opcode::I32Const);  // junk arm, value free
  CHECK(sb[2] == i32_const(1));
  CHECK(sb[3].op == Opcode::Select);
  CHECK(invoke1(sel, {Value::make_i32(-5)}).as_i32() == -5);

  Module fm = one_func({{ValType::F64}, {ValType::F64}},
                       {make_instr(Opcode::LocalGet, 0)});
  auto [neg, ne] = apply_until(fm, MutationKind::Peephole, "double-negate",
                               {"double-negate"});
  const InstrSeq& nb = neg.functions[0].body;
  REQUIRE(nb.size() == 4);
  CHECK(nb[1].op == Opcode::F64Neg);
  CHECK(nb[2].op == Opcode::F64Neg);
  CHECK(invoke1(neg, {Value::make_f64(-2.5)}).as_f64() == -2.5);
}

TEST_CASE("constant splitting keeps the wrapped sum") {
  Module m = one_func({{}, {ValType::I32}}, {i32_const(0x12345678)});
  auto [mut, entry] =
      apply_until(m, MutationKind::Peephole, "const-split", {"const-split"});
  const InstrSeq& body = mut.functions[0].body;
  REQUIRE(body.size() == 4);
  CHECK(body[0].op == Opcode::I32Const);
  CHECK(body[1].op == Opcode::I32Const);
  CHECK(body[2].op == Opcode::I32Add);
  uint32_t sum = static_cast<uint32_t>(body[0].i32()) +
                 static_cast<uint32_t>(body[1].i32());
  CHECK(sum == 0x12345678u);
  CHECK(invoke1(mut, {}).as_i32() == 0x12345678);

  Module m64 = one_func({{}, {ValType::I64}}, {i64_const(-987654321012345ll)});
  auto [mut64, e64] =
      apply_until(m64, MutationKind::Peephole, "const-split", {"const-split"});
  CHECK(invoke1(mut64, {}).as_i64() == -987654321012345ll);
}

TEST_CASE("if/else arm swap negates the condition") {
  Module m = one_func({{ValType::I32}, {ValType::I32}},
                      {make_instr(Opcode::LocalGet, 0),
                       make_instr(Opcode::If, 0x7F), i32_const(10),
                       make_instr(Opcode::Else), i32_const(20),
                       make_instr(Opcode::End)});
  REQUIRE(invoke1(m, {Value::make_i32(1)}).as_i32() == 10);
  auto [mut, entry] = apply_until(m, MutationKind::CodeMotion, "if-swap");
  const InstrSeq& body = mut.functions[0].body;
  CHECK(body[1].op == Opcode::I32Eqz);
  CHECK(body[2].op == Opcode::If);
  CHECK(body[3] == i32_const(20));  // arms exchanged
  CHECK(body[5] == i32_const(10));
  CHECK(invoke1(mut, {Value::make_i32(1)}).as_i32() == 10);
  CHECK(invoke1(mut, {Value::make_i32(0)}).as_i32() == 20);
  CHECK(differential_check(m, mut, make_differential_suite(m)).equivalent);
}

TEST_CASE("loop peel unrolls one guarded iteration") {
  // sum 1..n by counting n down; the loop leads with `n == 0 ? exit`.
  Module m = one_func(
      {{ValType::I32}, {ValType::I32}},
      {make_instr(Opcode::Block, 0x40), make_instr(Opcode::Loop, 0x40),
       make_instr(Opcode::LocalGet, 0), make_instr(Opcode::I32Eqz),
       make_instr(Opcode::BrIf, 1), make_instr(Opcode::LocalGet, 1),
       make_instr(Opcode::LocalGet, 0), make_instr(Opcode::I32Add),
       make_instr(Opcode::LocalSet, 1), make_instr(Opcode::LocalGet, 0),
       i32_const(1), make_instr(Opcode::I32Sub),
       make_instr(Opcode::LocalSet, 0), make_instr(Opcode::Br, 0),
       make_instr(Opcode::End), make_instr(Opcode::End),
       make_instr(Opcode::LocalGet, 1)},
      {ValType::I32});
  REQUIRE(invoke1(m, {Value::make_i32(5)}).as_i32() == 15);
  auto [mut, entry] = apply_until(m, MutationKind::CodeMotion, "loop-peel");
  CHECK(invoke1(mut, {Value::make_i32(5)}).as_i32() == 15);
  CHECK(invoke1(mut, {Value::make_i32(0)}).as_i32() == 0);
  CHECK(invoke1(mut, {Value::make_i32(1)}).as_i32() == 1);
  CHECK(differential_check(m, mut, make_differential_suite(m)).equivalent);
  // the peeled guard copy exists: two i32.eqz now, one loop still
  auto count_op = [](const InstrSeq& b, Opcode op) {
    return std::count_if(b.begin(), b.end(),
                         [&](const Instruction& i) { return i.op == op; });
  };
  CHECK(count_op(mut.functions[0].body, Opcode::I32Eqz) == 2);
  CHECK(count_op(mut.functions[0].body, Opcode::Loop) == 1);

  // peeling the peeled module again still agrees
  auto [mut2, e2] = apply_until(mut, MutationKind::CodeMotion, "loop-peel");
  CHECK(differential_check(m, mut2, make_differential_suite(m)).equivalent);
}

TEST_CASE("block wrap nests a region and fixes branch depths") {
  // br 1 out of the inner block crosses the wrap, so its depth must move.
  Module m = one_func({{ValType::I32}, {ValType::I32}},
                      {make_instr(Opcode::Block, 0x40),
                       make_instr(Opcode::LocalGet, 0),
                       make_instr(Opcode::BrIf, 0),
                       make_instr(Opcode::End), i32_const(7)});
  for (uint64_t seed = 0; seed < 120; ++seed) {
    auto [mut, entry] =
        apply_transformation(m, {MutationKind::CodeMotion, seed, {}});
    if (!entry.applied) continue;
    INFO("seed " << seed << " site " << entry.site);
    CHECK(validate(mut).ok());
    CHECK(invoke1(mut, {Value::make_i32(0)}).as_i32() == 7);
    CHECK(invoke1(mut, {Value::make_i32(9)}).as_i32() == 7);
  }
}

TEST_CASE("added functions are small, pure, and unreferenced") {
  const auto& fx = corpus().front();
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto [mut, entry] =
        apply_transformation(fx.m, {MutationKind::AddFunction, seed, {}});
    REQUIRE(entry.applied);
    REQUIRE(mut.functions.size() == fx.m.functions.size() + 1);
    const Function& nf = mut.functions.back();
    CHECK(nf.body.size() <= 16);
    for (const auto& ins : nf.body) {
      bool allowed = ins.op == Opcode::End || ins.op == Opcode::LocalGet;
      switch (ins.op) {
        case Opcode::I32Const: case Opcode::I64Const:
        case Opcode::F32Const: case Opcode::F64Const:
        case Opcode::I32Add: case Opcode::I32Xor: case Opcode::I32And:
        case Opcode::I32Or: case Opcode::I32Mul:
        case Opcode::I64Add: case Opcode::I64Xor: case Opcode::I64And:
        case Opcode::I64Or: case Opcode::I64Mul:
        case Opcode::F32Add: case Opcode::F32Mul:
        case Opcode::F64Add: case Opcode::F64Mul:
          allowed = true;
          break;
        default:
          break;
      }
      CHECK(allowed);
    }
    CHECK(mut.exports == fx.m.exports);
    uint32_t abs = mut.num_funcs() - 1;
    for (const auto& f : mut.functions)
      for (const auto& ins : f.body) {
        bool calls_new = ins.op == Opcode::Call && ins.index() == abs;
        CHECK_FALSE(calls_new);
      }
  }
}

TEST_CASE("added custom sections and types are well formed") {
  const auto& fx = corpus().at(2);
  auto [mc, ec] =
      apply_transformation(fx.m, {MutationKind::AddCustomSection, 11, {}});
  REQUIRE(mc.customs.size() == fx.m.customs.size() + 1);
  const auto& cs = mc.customs.back();
  CHECK(cs.name.rfind("shade.", 0) == 0);
  CHECK(cs.bytes.size() >= 1);
  CHECK(cs.bytes.size() <= 32);
  CHECK(ec.site.find(cs.name) != std::string::npos);

  auto [mt, et] = apply_transformation(fx.m, {MutationKind::AddType, 11, {}});
  CHECK(mt.types.size() == fx.m.types.size() + 1);
  CHECK(mt.types.back().results.size() <= 1);
}

TEST_CASE("dead item removal remaps call and type indices") {
  Module m;
  m.types.push_back({{ValType::I32}, {ValType::I32}});          // used
  m.types.push_back({{ValType::F64, ValType::F64}, {ValType::F64}});  // dead
  Function a;  // exported, calls func 2
  a.type_index = 0;
  a.body = {make_instr(Opcode::LocalGet, 0), make_instr(Opcode::Call, 2),
            make_instr(Opcode::End)};
  Function b;  // dead
  b.type_index = 0;
  b.body = {make_instr(Opcode::LocalGet, 0), make_instr(Opcode::End)};
  Function c;  // called by a
  c.type_index = 0;
  c.body = {make_instr(Opcode::LocalGet, 0), i32_const(1),
            make_instr(Opcode::I32Add), make_instr(Opcode::End)};
  m.functions = {a, b, c};
  m.exports.push_back({"f", ExternalKind::Func, 0});
  REQUIRE(validate(m).ok());
  REQUIRE(invoke1(m, {Value::make_i32(4)}).as_i32() == 5);

  auto [mf, ef] = apply_until(m, MutationKind::RemoveItem, "remove func");
  CHECK(ef.site == "remove func 1");
  REQUIRE(mf.functions.size() == 2);
  CHECK(mf.functions[0].body[1] == make_instr(Opcode::Call, 1));
  CHECK(invoke1(mf, {Value::make_i32(4)}).as_i32() == 5);

  auto [mt, et] = apply_until(m, MutationKind::RemoveItem, "remove type");
  CHECK(et.site == "remove type 1");
  REQUIRE(mt.types.size() == 1);
  CHECK(invoke1(mt, {Value::make_i32(4)}).as_i32() == 5);

  // chase removals to the fixpoint: the exported chain must survive
  Module cur = m;
  for (int round = 0; round < 4; ++round) {
    auto [next, entry] =
        apply_transformation(cur, {MutationKind::RemoveItem, static_cast<uint64_t>(31 + round), {}});
    if (!entry.applied) break;
    CHECK(encode_module(next).size() <= encode_module(cur).size());
    cur = std::move(next);
  }
  CHECK(invoke1(cur, {Value::make_i32(4)}).as_i32() == 5);
  auto [fin, fe] =
      apply_transformation(cur, {MutationKind::RemoveItem, 99, {}});
  CHECK_FALSE(fe.applied);  // nothing dead remains
}

TEST_CASE("unknown peephole rule names are rejected") {
  const auto& fx = corpus().front();
  CHECK_THROWS_WITH_AS(
      apply_transformation(fx.m, {MutationKind::Peephole, 1, {"strength-red"}}),
      "unknown peephole rule: strength-red", Error);
  try {
    apply_transformation(fx.m, {MutationKind::Peephole, 1, {"strength-red"}});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("rule whitelist restricts peephole site choice") {
  const auto& fx = corpus().at(1);
  for (uint64_t seed = 0; seed < 30; ++seed) {
    auto [mut, entry] = apply_transformation(
        fx.m, {MutationKind::Peephole, seed, {"nop-insert"}});
    REQUIRE(entry.applied);
    CHECK(entry.site.find("nop-insert") != std::string::npos);
  }
}

TEST_CASE("stacked transformations checkpoint and replay bit-exactly") {
  for (size_t idx : {size_t{8}, size_t{17}}) {
    const auto& fx = corpus().at(idx);
    CAPTURE(fx.file);
    auto res = stack_transformations(fx.m, 300, 20260822,
                                     std::span(kAllMutationKinds), 50);
    CHECK(res.trace.entries.size() == 300);
    CHECK(res.trace.input_digest == module_digest(fx.m));
    CHECK(res.trace.output_digest == module_digest(res.module));
    CHECK(validate(res.module).ok());
    CHECK(differential_check(fx.m, res.module, fx.suite, 4 * kDefaultFuel)
              .equivalent);

    int applied = 0;
    std::set<std::string_view> kinds_seen;
    for (const auto& e : res.trace.entries) {
      kinds_seen.insert(mutation_kind_name(e.spec.kind));
      if (e.applied) {
        ++applied;
        CHECK(e.site != "none");
      } else {
        CHECK(e.site == "none");
      }
    }
    CHECK(applied > 200);          // only removal can come up dry early on
    CHECK(kinds_seen.size() == 6); // uniform draw visits every kind

    Module replayed = replay_trace(fx.m, res.trace);
    CHECK(encode_module(replayed) == encode_module(res.module));

    std::string jsonl = trace_to_jsonl(res.trace);
    MutationTrace parsed = trace_from_jsonl(jsonl);
    CHECK(parsed == res.trace);
    Module replayed2 = replay_trace(fx.m, parsed);
    CHECK(encode_module(replayed2) == encode_module(res.module));
  }
}

TEST_CASE("a long stack on a hashing fixture stays equivalent") {
  const Fixture* miner = nullptr;
  for (const auto& fx : corpus())
    if (fx.file == "xor_hash_loop.wasm") miner = &fx;
  REQUIRE(miner != nullptr);
  auto res = stack_transformations(miner->m, 1000, 4242,
                                   std::span(kAllMutationKinds), 100);
  CHECK(res.trace.entries.size() == 1000);
  CHECK(differential_check(miner->m, res.module, miner->suite, 4 * kDefaultFuel)
            .equivalent);
  CHECK(encode_module(res.module).size() > encode_module(miner->m).size());
}

TEST_CASE("stack argument validation") {
  const auto& fx = corpus().front();
  CHECK_THROWS_AS(
      stack_transformations(fx.m, 0, 1, std::span(kAllMutationKinds), 100),
      Error);
  CHECK_THROWS_AS(stack_transformations(fx.m, 5, 1, {}, 100), Error);
  CHECK_THROWS_AS(
      stack_transformations(fx.m, 5, 1, std::span(kAllMutationKinds), 0),
      Error);
}

TEST_CASE("semantics violation error carries iteration and trace prefix") {
  MutationTrace prefix;
  prefix.input_digest = 0xabc;
  prefix.entries.resize(3);
  SemanticsViolationError err(12, "case 4 diverged", prefix);
  CHECK(err.code() == ErrorCode::SemanticsViolation);
  CHECK(err.iteration() == 12);
  CHECK(err.trace().entries.size() == 3);
  CHECK(std::string(err.what()).find("iteration 12") != std::string::npos);
  CHECK(std::string(err.what()).find("case 4 diverged") != std::string::npos);
}

TEST_CASE("trace jsonl parsing rejects malformed input") {
  CHECK_THROWS_AS(trace_from_jsonl(""), Error);
  CHECK_THROWS_AS(trace_from_jsonl("not json\n"), Error);
  CHECK_THROWS_AS(trace_from_jsonl("{\"format\":\"something-else\"}\n"), Error);
  std::string good_header =
      "{\"format\":\"wasm-shade-trace\",\"version\":1,"
      "\"input_digest\":\"00000000000000ff\","
      "\"output_digest\":\"00000000000000ff\"}\n";
  CHECK(trace_from_jsonl(good_header).input_digest == 0xff);
  CHECK_THROWS_AS(trace_from_jsonl(good_header + "{\"iteration\":0}\n"), Error);

  const auto& fx = corpus().front();
  auto res = stack_transformations(fx.m, 10, 5, std::span(kAllMutationKinds));
  MutationTrace tampered = res.trace;
  tampered.output_digest ^= 1;
  CHECK_THROWS_AS(replay_trace(fx.m, tampered), Error);
  MutationTrace wrong_input = res.trace;
  wrong_input.input_digest ^= 1;
  CHECK_THROWS_AS(replay_trace(fx.m, wrong_input), Error);
}
