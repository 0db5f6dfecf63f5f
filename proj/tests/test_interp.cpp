#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "wasmshade/binary.hpp"
#include "wasmshade/interp.hpp"
#include "wasmshade/module.hpp"
#include "wasmshade/opcodes.hpp"
#include "test_util.hpp"

using namespace wasmshade;
using nlohmann::json;

#ifndef WS_TEST_DATA_DIR
#define WS_TEST_DATA_DIR "tests/data"
#endif

namespace {

Module simple_module(FuncType ft, InstrSeq body,
                     std::vector<ValType> locals = {}) {
  Module m;
  m.types.push_back(std::move(ft));
  Function f;
  f.type_index = 0;
  f.locals = std::move(locals);
  f.body = std::move(body);
  f.body.push_back(make_instr(Opcode::End));
  m.functions.push_back(std::move(f));
  m.exports.push_back({"f", ExternalKind::Func, 0});
  return m;
}

ExecResult run1(const Module& m, std::vector<Value> args = {},
                uint64_t fuel = kDefaultFuel) {
  Instance inst(m, default_bindings(m));
  return inst.invoke("f", args, fuel);
}

Module load_wasm(const std::string& path) {
  std::string s = testutil::slurp(path);
  std::vector<uint8_t> bytes(s.begin(), s.end());
  return parse_module(bytes);
}

}  // namespace

TEST_CASE("invoke returns computed values and counts fuel exactly") {
  Module m = simple_module({{ValType::I32, ValType::I32}, {ValType::I32}},
                           {make_instr(Opcode::LocalGet, 0),
                            make_instr(Opcode::LocalGet, 1),
                            make_instr(Opcode::I32Add)});
  ExecResult r = run1(m, {Value::make_i32(30), Value::make_i32(12)});
  REQUIRE(r.outcome == ExecResult::Outcome::Values);
  REQUIRE(r.values.size() == 1);
  CHECK(r.values[0].as_i32() == 42);
  // local.get, local.get, i32.add, end
  CHECK(r.fuel_used == 4);
}

TEST_CASE("invoke misuse throws typed errors") {
  Module m = simple_module({{ValType::I32}, {ValType::I32}},
                           {make_instr(Opcode::LocalGet, 0)});
  Instance inst(m);
  CHECK_THROWS_AS((void)inst.invoke("nope", {}), Error);
  try {
    (void)inst.invoke("nope", {});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoSuchExport);
  }
  try {
    (void)inst.invoke("f", {});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SignatureMismatch);
  }
  std::vector<Value> wrong = {Value::make_i64(1)};
  try {
    (void)inst.invoke("f", wrong);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SignatureMismatch);
  }
}

TEST_CASE("traps carry their kind") {
  ExecResult r = run1(simple_module({{}, {}}, {make_instr(Opcode::Unreachable)}));
  REQUIRE(r.outcome == ExecResult::Outcome::Trap);
  CHECK(r.trap == TrapKind::Unreachable);

  r = run1(simple_module({{}, {ValType::I32}},
                         {i32_const(1), i32_const(0),
                          make_instr(Opcode::I32DivS)}));
  REQUIRE(r.outcome == ExecResult::Outcome::Trap);
  CHECK(r.trap == TrapKind::DivideByZero);
}

TEST_CASE("fuel exhaustion reports and never lies about completed work") {
  // infinite loop: loop { br 0 }
  Module m = simple_module({{}, {}},
                           {make_instr(Opcode::Loop, 0x40),
                            make_instr(Opcode::Br, 0),
                            make_instr(Opcode::End)});
  ExecResult r = run1(m, {}, 10007);
  REQUIRE(r.outcome == ExecResult::Outcome::FuelExhausted);
  CHECK(r.fuel_used == 10007);
}

TEST_CASE("more fuel never changes a completed outcome") {
  Module m = simple_module(
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
  std::vector<Value> args = {Value::make_i32(9)};

  ExecResult full = run1(m, args);
  REQUIRE(full.outcome == ExecResult::Outcome::Values);
  CHECK(full.values[0].as_i32() == 45);

  bool completed_before = false;
  for (uint64_t fuel = 0; fuel <= full.fuel_used + 16; ++fuel) {
    ExecResult r = run1(m, args, fuel);
    if (r.outcome == ExecResult::Outcome::Values) {
      completed_before = true;
      CHECK(r.values[0].as_i32() == 45);
      CHECK(r.fuel_used == full.fuel_used);
    } else {
      // once a run completes at some budget, no larger budget may fail
      CHECK(!completed_before);
      CHECK(r.fuel_used == fuel);
    }
  }
  CHECK(completed_before);
}

TEST_CASE("memory loads, stores, bounds and digest") {
  // f(addr, v): store v at addr, load it back
  Module m = simple_module(
      {{ValType::I32, ValType::I32}, {ValType::I32}},
      {make_instr(Opcode::LocalGet, 0), make_instr(Opcode::LocalGet, 1),
       make_instr(Opcode::I32Store, 2, 0), make_instr(Opcode::LocalGet, 0),
       make_instr(Opcode::I32Load, 2, 0)});
  m.memories.push_back({Limits{1, 1}});

  Instance inst(m);
  uint64_t empty_digest = inst.memory_digest();
  ExecResult r = inst.invoke("f", std::vector<Value>{Value::make_i32(100),
                                                     Value::make_i32(-7)});
  REQUIRE(r.outcome == ExecResult::Outcome::Values);
  CHECK(r.values[0].as_i32() == -7);
  CHECK(r.memory_digest != empty_digest);
  CHECK(r.memory_digest == inst.memory_digest());
  // little-endian byte layout in memory
  CHECK(inst.memory()[100] == 0xF9);
  CHECK(inst.memory()[103] == 0xFF);

  ExecResult oob = inst.invoke(
      "f", std::vector<Value>{Value::make_i32(65533), Value::make_i32(1)});
  REQUIRE(oob.outcome == ExecResult::Outcome::Trap);
  CHECK(oob.trap == TrapKind::MemoryOutOfBounds);
}

TEST_CASE("memory.grow honours the declared maximum") {
  Module m = simple_module({{ValType::I32}, {ValType::I32}},
                           {make_instr(Opcode::LocalGet, 0),
                            make_instr(Opcode::MemoryGrow)});
  m.memories.push_back({Limits{1, 3}});
  Instance inst(m);
  auto grow = [&](int32_t n) {
    return inst.invoke("f", std::vector<Value>{Value::make_i32(n)})
        .values[0]
        .as_i32();
  };
  CHECK(grow(1) == 1);   // 1 -> 2 pages
  CHECK(grow(2) == -1);  // 2 + 2 > max 3
  CHECK(grow(1) == 2);   // 2 -> 3
  CHECK(grow(1) == -1);
  CHECK(inst.memory().size() == 3 * 65536);
}

TEST_CASE("globals persist across calls on one instance") {
  Module m;
  m.types.push_back({{}, {ValType::I32}});
  m.globals.push_back({ValType::I32, true, i32_const(5)});
  Function f;
  f.type_index = 0;
  f.body = {make_instr(Opcode::GlobalGet, 0), i32_const(1),
            make_instr(Opcode::I32Add), make_instr(Opcode::LocalTee, 0),
            make_instr(Opcode::GlobalSet, 0), make_instr(Opcode::LocalGet, 0),
            make_instr(Opcode::End)};
  f.locals = {ValType::I32};
  m.functions.push_back(f);
  m.exports.push_back({"inc", ExternalKind::Func, 0});

  Instance inst(m);
  CHECK(inst.invoke("inc", {}).values[0].as_i32() == 6);
  CHECK(inst.invoke("inc", {}).values[0].as_i32() == 7);
  auto globals = inst.global_values();
  REQUIRE(globals.size() == 1);
  CHECK(globals[0].as_i32() == 7);
}

TEST_CASE("call_indirect dispatches, checks bounds, null and signature") {
  Module m;
  m.types.push_back({{}, {ValType::I32}});             // type 0
  m.types.push_back({{ValType::I32}, {ValType::I32}}); // type 1, different
  Function ret7;
  ret7.type_index = 0;
  ret7.body = {i32_const(7), make_instr(Opcode::End)};
  Function ident;
  ident.type_index = 1;
  ident.body = {make_instr(Opcode::LocalGet, 0), make_instr(Opcode::End)};
  Function driver;  // f(slot) -> call_indirect type 0 through the table
  driver.type_index = 1;
  driver.body = {make_instr(Opcode::LocalGet, 0),
                 make_instr(Opcode::CallIndirect, 0, 0),
                 make_instr(Opcode::End)};
  m.functions = {ret7, ident, driver};
  m.tables.push_back({Limits{4, 4}});
  ElemSegment e;
  e.offset = i32_const(0);
  e.func_indices = {0, 1};  // slot 0: matching sig, slot 1: mismatched
  m.elems.push_back(e);
  m.exports.push_back({"f", ExternalKind::Func, 2});

  Instance inst(m);
  auto call_slot = [&](int32_t slot) {
    return inst.invoke("f", std::vector<Value>{Value::make_i32(slot)});
  };
  CHECK(call_slot(0).values[0].as_i32() == 7);

  ExecResult bad_sig = call_slot(1);
  REQUIRE(bad_sig.outcome == ExecResult::Outcome::Trap);
  CHECK(bad_sig.trap == TrapKind::IndirectSignatureMismatch);

  ExecResult null_slot = call_slot(2);
  REQUIRE(null_slot.outcome == ExecResult::Outcome::Trap);
  CHECK(null_slot.trap == TrapKind::UndefinedTableEntry);

  ExecResult oob = call_slot(9);
  REQUIRE(oob.outcome == ExecResult::Outcome::Trap);
  CHECK(oob.trap == TrapKind::UndefinedTableEntry);
}

TEST_CASE("start function runs during instantiation") {
  Module m;
  m.types.push_back({{}, {}});
  m.types.push_back({{}, {ValType::I32}});
  Function init;  // writes a marker into memory
  init.type_index = 0;
  init.body = {i32_const(0), i32_const(0x1234), make_instr(Opcode::I32Store, 2, 0),
               make_instr(Opcode::End)};
  Function read;
  read.type_index = 1;
  read.body = {i32_const(0), make_instr(Opcode::I32Load, 2, 0),
               make_instr(Opcode::End)};
  m.functions = {init, read};
  m.memories.push_back({Limits{1, {}}});
  m.start = 0;
  m.exports.push_back({"read", ExternalKind::Func, 1});

  Instance inst(m);
  CHECK(inst.invoke("read", {}).values[0].as_i32() == 0x1234);
}

TEST_CASE("deep recursion is cut off rather than crashing") {
  Module m;
  m.types.push_back({{}, {}});
  Function f;
  f.type_index = 0;
  f.body = {make_instr(Opcode::Call, 0), make_instr(Opcode::End)};
  m.functions.push_back(f);
  m.exports.push_back({"f", ExternalKind::Func, 0});
  ExecResult r = run1(m);
  REQUIRE(r.outcome == ExecResult::Outcome::Trap);
  CHECK(r.trap == TrapKind::CallStackExhausted);
}

TEST_CASE("host stubs: abort traps, time is constant, source is reproducible") {
  Module m;
  m.types.push_back({{}, {}});              // abort
  m.types.push_back({{}, {ValType::I64}});  // time / source
  m.imports.push_back(
      {"env", "abort", ExternalKind::Func, 0, {}, ValType::I32, false});
  m.imports.push_back(
      {"env", "time", ExternalKind::Func, 1, {}, ValType::I32, false});
  m.imports.push_back(
      {"env", "source", ExternalKind::Func, 1, {}, ValType::I32, false});
  Function call_abort;
  call_abort.type_index = 0;
  call_abort.body = {make_instr(Opcode::Call, 0), make_instr(Opcode::End)};
  Function get_time;
  get_time.type_index = 1;
  get_time.body = {make_instr(Opcode::Call, 1), make_instr(Opcode::End)};
  Function next_byte;
  next_byte.type_index = 1;
  next_byte.body = {make_instr(Opcode::Call, 2), make_instr(Opcode::End)};
  m.functions = {call_abort, get_time, next_byte};
  m.exports.push_back({"boom", ExternalKind::Func, 3});
  m.exports.push_back({"time", ExternalKind::Func, 4});
  m.exports.push_back({"next", ExternalKind::Func, 5});

  Instance inst(m, default_bindings(m));
  ExecResult r = inst.invoke("boom", {});
  REQUIRE(r.outcome == ExecResult::Outcome::Trap);
  CHECK(r.trap == TrapKind::HostAbort);

  CHECK(inst.invoke("time", {}).values[0].as_i64() == 1690000000000ll);
  CHECK(inst.invoke("time", {}).values[0].as_i64() == 1690000000000ll);

  int64_t first = inst.invoke("next", {}).values[0].as_i64();
  int64_t second = inst.invoke("next", {}).values[0].as_i64();
  CHECK(first != second);  // stream advances
  Instance other(m, default_bindings(m));
  CHECK(other.invoke("next", {}).values[0].as_i64() == first);

  // an import the stub set does not know stays unbound
  Module m2 = m;
  m2.imports[1].field = "mystery";
  CHECK_THROWS_AS(Instance(m2, default_bindings(m2)), Error);
  try {
    Instance bad(m2, default_bindings(m2));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnboundImport);
  }
}

TEST_CASE("imported global values come from the bindings") {
  Module m;
  m.types.push_back({{}, {ValType::I32}});
  m.imports.push_back(
      {"env", "flag", ExternalKind::Global, 0, {}, ValType::I32, false});
  Function f;
  f.type_index = 0;
  f.body = {make_instr(Opcode::GlobalGet, 0), make_instr(Opcode::End)};
  m.functions.push_back(f);
  m.exports.push_back({"f", ExternalKind::Func, 0});

  ImportBindings b;
  b.globals["env.flag"] = Value::make_i32(99);
  Instance inst(m, b);
  CHECK(inst.invoke("f", {}).values[0].as_i32() == 99);

  // default bindings fall back to zero
  Instance dz(m, default_bindings(m));
  CHECK(dz.invoke("f", {}).values[0].as_i32() == 0);
}

TEST_CASE("out-of-range segments fail instantiation with the right code") {
  Module m = simple_module({{}, {}}, {});
  m.memories.push_back({Limits{1, {}}});
  DataSegment d;
  d.offset = i32_const(65530);
  d.bytes = {1, 2, 3, 4, 5, 6, 7, 8};
  m.datas.push_back(d);
  try {
    Instance inst(m);
    FAIL("expected SegmentOutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SegmentOutOfBounds);
  }

  Module t = simple_module({{}, {}}, {});
  t.tables.push_back({Limits{1, 1}});
  ElemSegment e;
  e.offset = i32_const(1);
  e.func_indices = {0};
  t.elems.push_back(e);
  try {
    Instance inst(t);
    FAIL("expected SegmentOutOfBounds");
  } catch (const Error& e2) {
    CHECK(e2.code() == ErrorCode::SegmentOutOfBounds);
  }
}

TEST_CASE("produced NaNs collapse to the canonical pattern") {
  ExecResult r = run1(simple_module(
      {{}, {ValType::F32}},
      {make_instr(Opcode::F32Const, 0), make_instr(Opcode::F32Const, 0),
       make_instr(Opcode::F32Div)}));
  REQUIRE(r.outcome == ExecResult::Outcome::Values);
  CHECK(r.values[0].bits == 0x7fc00000u);

  ExecResult r64 = run1(simple_module(
      {{}, {ValType::F64}},
      {make_instr(Opcode::F64Const, 0), make_instr(Opcode::F64Const, 0),
       make_instr(Opcode::F64Div)}));
  CHECK(r64.values[0].bits == 0x7ff8000000000000ull);
}

// ---------------------------------------------------------------------------
// Frozen conformance fixtures, generated by an independent implementation
// (tests/tools/gen_conformance.py). Bit patterns and trap kinds must match
// exactly.
// ---------------------------------------------------------------------------

namespace {

ValType valtype_from(const std::string& s) {
  if (s == "i32") return ValType::I32;
  if (s == "i64") return ValType::I64;
  if (s == "f32") return ValType::F32;
  return ValType::F64;
}

Instruction instr_from_json(const json& j) {
  auto op = opcode_from_mnemonic(j[0].get<std::string>());
  REQUIRE(op.has_value());
  Instruction ins = make_instr(*op);
  ins.imm.clear();
  for (const auto& v : j[1]) {
    uint64_t bits = std::stoull(v.get<std::string>());
    ins.imm.push_back(bits);
  }
  // keep the model convention: i32 const immediates are sign-extended
  if (ins.op == Opcode::I32Const)
    ins.imm[0] = static_cast<uint64_t>(
        static_cast<int64_t>(static_cast<int32_t>(ins.imm[0])));
  return ins;
}

}  // namespace

TEST_CASE("numeric semantics match the independently generated fixtures") {
  json doc = json::parse(
      testutil::slurp(std::string(WS_TEST_DATA_DIR) + "/conformance.json"));
  REQUIRE(doc["cases"].size() >= 50);

  size_t checked = 0;
  for (const auto& c : doc["cases"]) {
    std::string name = c["name"].get<std::string>();
    INFO("case: ", name);

    FuncType ft;
    for (const auto& p : c["params"])
      ft.params.push_back(valtype_from(p.get<std::string>()));
    for (const auto& rt : c["results"])
      ft.results.push_back(valtype_from(rt.get<std::string>()));
    std::vector<ValType> locals;
    for (const auto& l : c["locals"])
      locals.push_back(valtype_from(l.get<std::string>()));
    InstrSeq body;
    for (const auto& bi : c["body"]) body.push_back(instr_from_json(bi));

    Module m = simple_module(ft, body, locals);
    std::vector<Value> args;
    for (const auto& a : c["args"]) {
      Value v;
      v.type = valtype_from(a[0].get<std::string>());
      v.bits = std::stoull(a[1].get<std::string>());
      args.push_back(v);
    }

    ExecResult r = run1(m, args);
    const auto& expect = c["expect"];
    if (expect.contains("trap")) {
      REQUIRE(r.outcome == ExecResult::Outcome::Trap);
      CHECK(trap_name(r.trap) == expect["trap"].get<std::string>());
    } else {
      REQUIRE(r.outcome == ExecResult::Outcome::Values);
      REQUIRE(r.values.size() == expect["values"].size());
      for (size_t i = 0; i < r.values.size(); ++i) {
        CHECK(valtype_name(r.values[i].type) ==
              expect["values"][i][0].get<std::string>());
        CHECK(r.values[i].bits ==
              std::stoull(expect["values"][i][1].get<std::string>()));
      }
    }
    ++checked;
  }
  CHECK(checked == doc["cases"].size());
}

// ---------------------------------------------------------------------------
// Differential checking
// ---------------------------------------------------------------------------

TEST_CASE("differential suite is deterministic, small-valued and signature-driven") {
  Module m;
  m.types.push_back({{ValType::I32, ValType::I64}, {ValType::I32}});
  Function f;
  f.type_index = 0;
  f.body = {make_instr(Opcode::LocalGet, 0), make_instr(Opcode::End)};
  m.functions.push_back(f);
  m.exports.push_back({"a", ExternalKind::Func, 0});
  m.exports.push_back({"b", ExternalKind::Func, 0});

  auto s1 = make_differential_suite(m);
  auto s2 = make_differential_suite(m);
  REQUIRE(s1.size() == 16);  // 2 exports x 8 cases
  for (size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].export_name == s2[i].export_name);
    CHECK(s1[i].args == s2[i].args);
    for (const Value& v : s1[i].args) {
      if (v.type == ValType::I32) {
        CHECK(v.as_i32() >= 0);
        CHECK(v.as_i32() <= 63);
      }
    }
  }
  // adding a non-exported function must not change the suite
  Module grown = m;
  grown.functions.push_back(m.functions[0]);
  auto s3 = make_differential_suite(grown);
  REQUIRE(s3.size() == s1.size());
  for (size_t i = 0; i < s1.size(); ++i) CHECK(s3[i].args == s1[i].args);
}

TEST_CASE("differential check separates equivalent from diverging rewrites") {
  Module m = simple_module({{ValType::I32}, {ValType::I32}},
                           {make_instr(Opcode::LocalGet, 0), i32_const(3),
                            make_instr(Opcode::I32Mul)});
  auto suite = make_differential_suite(m);

  DifferentialResult same = differential_check(m, m, suite);
  CHECK(same.equivalent);

  // x*3 vs x*3+1: diverges on every input
  Module bad = simple_module({{ValType::I32}, {ValType::I32}},
                             {make_instr(Opcode::LocalGet, 0), i32_const(3),
                              make_instr(Opcode::I32Mul), i32_const(1),
                              make_instr(Opcode::I32Add)});
  DifferentialResult diff = differential_check(m, bad, suite);
  CHECK(!diff.equivalent);
  CHECK(diff.detail.find("case") != std::string::npos);
  CHECK(diff.detail.find("values") != std::string::npos);

  // x*3 vs x+x+x: equivalent everywhere
  Module alt = simple_module(
      {{ValType::I32}, {ValType::I32}},
      {make_instr(Opcode::LocalGet, 0), make_instr(Opcode::LocalGet, 0),
       make_instr(Opcode::I32Add), make_instr(Opcode::LocalGet, 0),
       make_instr(Opcode::I32Add)});
  CHECK(differential_check(m, alt, suite).equivalent);

  // an invalid rewrite is reported as a setup failure, not a crash
  Module broken = simple_module({{ValType::I32}, {ValType::I32}},
                                {make_instr(Opcode::I32Add)});
  DifferentialResult setup = differential_check(m, broken, suite);
  CHECK(!setup.equivalent);
  CHECK(setup.detail.find("setup") != std::string::npos);
}

TEST_CASE("differential check sees divergence hidden in memory or globals") {
  // identical return value, different memory side effect
  auto mem_mod = [](int32_t stored) {
    Module m = simple_module({{}, {ValType::I32}},
                             {i32_const(8), i32_const(stored),
                              make_instr(Opcode::I32Store, 2, 0), i32_const(1)});
    m.memories.push_back({Limits{1, 1}});
    return m;
  };
  Module a = mem_mod(5), b = mem_mod(6);
  auto suite = make_differential_suite(a);
  DifferentialResult r = differential_check(a, b, suite);
  CHECK(!r.equivalent);
  CHECK(r.detail.find("digest") != std::string::npos);

  // identical return value and memory, different global side effect
  auto glob_mod = [](int32_t delta) {
    Module m;
    m.types.push_back({{}, {ValType::I32}});
    m.globals.push_back({ValType::I32, true, i32_const(0)});
    Function f;
    f.type_index = 0;
    f.body = {i32_const(delta), make_instr(Opcode::GlobalSet, 0), i32_const(1),
              make_instr(Opcode::End)};
    m.functions.push_back(f);
    m.exports.push_back({"f", ExternalKind::Func, 0});
    return m;
  };
  Module ga = glob_mod(5), gb = glob_mod(6);
  DifferentialResult gr =
      differential_check(ga, gb, make_differential_suite(ga));
  CHECK(!gr.equivalent);
  CHECK(gr.detail.find("global") != std::string::npos);
}

// ---------------------------------------------------------------------------
// The bundled corpus must be fully runnable
// ---------------------------------------------------------------------------

TEST_CASE("every corpus module instantiates and runs its whole suite") {
  json manifest = json::parse(
      testutil::slurp(testutil::corpus_dir() + "/manifest.json"));
  REQUIRE(manifest["modules"].size() == 18);

  for (const auto& entry : manifest["modules"]) {
    std::string file = entry["file"].get<std::string>();
    INFO("module: ", file);
    Module m = load_wasm(testutil::corpus_dir() + "/" + file);
    auto suite = make_differential_suite(m);
    REQUIRE(!suite.empty());

    // self-comparison must hold, which also exercises every suite case
    DifferentialResult self = differential_check(m, m, suite);
    CHECK(self.equivalent);

    // no case may come anywhere near the fuel budget
    Instance inst(m, default_bindings(m));
    for (const auto& c : suite) {
      ExecResult r = inst.invoke(c.export_name, c.args);
      CHECK(r.outcome != ExecResult::Outcome::FuelExhausted);
      CHECK(r.fuel_used < kDefaultFuel / 10);
    }
  }
}
