#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wasmshade/module.hpp"

namespace wasmshade {

inline constexpr uint64_t kDefaultFuel = 50'000'000;

/// Runtime value. Floats are carried as bit patterns so NaN identity is
/// explicit; produced NaNs are canonicalized (f32 0x7fc00000,
/// f64 0x7ff8000000000000) before they are stored anywhere observable.
struct Value {
  ValType type = ValType::I32;
  uint64_t bits = 0;

  static Value make_i32(int32_t v);
  static Value make_i64(int64_t v);
  static Value make_f32(float v);
  static Value make_f64(double v);
  static Value from_f32_bits(uint32_t b);
  static Value from_f64_bits(uint64_t b);

  int32_t as_i32() const { return static_cast<int32_t>(bits); }
  uint32_t as_u32() const { return static_cast<uint32_t>(bits); }
  int64_t as_i64() const { return static_cast<int64_t>(bits); }
  uint64_t as_u64() const { return bits; }
  float as_f32() const;
  double as_f64() const;

  bool operator==(const Value&) const = default;
};

std::string value_text(const Value& v);

enum class TrapKind {
  Unreachable,
  MemoryOutOfBounds,
  DivideByZero,
  IntegerOverflow,
  InvalidConversion,
  UndefinedTableEntry,
  IndirectSignatureMismatch,
  CallStackExhausted,
  HostAbort,
};

std::string_view trap_name(TrapKind k);

struct ExecResult {
  enum class Outcome { Values, Trap, FuelExhausted };
  Outcome outcome = Outcome::Values;
  std::vector<Value> values;                 // when outcome == Values
  TrapKind trap = TrapKind::Unreachable;     // when outcome == Trap
  std::string detail;
  uint64_t fuel_used = 0;
  uint64_t memory_digest = 0;  // FNV-1a-64 over final linear memory

  /// Observable equality: outcome kind, values/trap kind, and memory digest.
  /// Fuel and human-readable detail are excluded.
  bool same_observable(const ExecResult& o) const;
  std::string summary() const;
};

/// Deterministic host stub behind an imported function.
struct HostStub {
  FuncType type;
  // Returns the results, or a trap kind. Stubs must be pure up to the
  // per-instance call counter they receive.
  std::function<std::variant<std::vector<Value>, TrapKind>(
      std::span<const Value> args, uint64_t call_index)>
      fn;
};

struct ImportBindings {
  std::map<std::string, HostStub> funcs;    // key "module.field"
  std::map<std::string, Value> globals;     // key "module.field"
};

/// Bindings covering the supported stub vocabulary for every function import
/// of `m`: fields named "abort" trap; "time"/"now" return a constant;
/// "sink" swallow a value; "source" yield a deterministic byte stream.
/// Unknown imported functions are left unbound (instantiate then fails).
ImportBindings default_bindings(const Module& m);

class Instance {
 public:
  struct Impl;  // public so the execution engine can reach instance state

  /// Builds memory/table/globals, applies segments, runs the start function.
  /// Throws Error(UnboundImport) or Error(SegmentOutOfBounds).
  Instance(const Module& m, const ImportBindings& bindings = {});
  ~Instance();
  Instance(Instance&&) noexcept;
  Instance& operator=(Instance&&) noexcept;

  /// Throws Error(NoSuchExport) / Error(SignatureMismatch) for misuse;
  /// execution failures (traps, fuel) are reported in the result.
  ExecResult invoke(std::string_view export_name, std::span<const Value> args,
                    uint64_t fuel = kDefaultFuel);

  std::span<const uint8_t> memory() const;
  std::vector<Value> global_values() const;
  uint64_t memory_digest() const;

 private:
  std::unique_ptr<Impl> impl_;
};

struct SuiteCase {
  std::string export_name;
  std::vector<Value> args;
};

/// Deterministic argument tuples for every exported function, derived from
/// the export names and signatures only — the same suite therefore applies
/// to any semantics-preserving rewrite of the module. Integer arguments stay
/// small so loop-driving parameters cannot blow the fuel budget.
std::vector<SuiteCase> make_differential_suite(const Module& m,
                                               int cases_per_export = 8);

struct DifferentialResult {
  bool equivalent = true;
  std::string detail;  // first differing case, both summaries
};

/// Runs every case on fresh instances of both modules and compares
/// observable results (outcome, values/trap, memory digest, final globals).
/// Instantiation failures surface as a non-equivalent result with detail
/// "setup: …".
DifferentialResult differential_check(const Module& orig, const Module& mut,
                                      std::span<const SuiteCase> suite,
                                      uint64_t fuel = kDefaultFuel);

}  // namespace wasmshade
