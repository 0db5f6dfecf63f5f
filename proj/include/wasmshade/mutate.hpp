#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wasmshade/common.hpp"
#include "wasmshade/module.hpp"

namespace wasmshade {

/// The transformation families. Every one of them preserves observable
/// behaviour; they differ in what they touch.
enum class MutationKind : uint8_t {
  CodeMotion,        // block wrapping, if/else arm swap, loop peeling
  Peephole,          // local instruction rewrites (identities, splits, swaps)
  AddFunction,       // small pure function that is never called
  AddType,           // unused signature
  AddCustomSection,  // opaque named payload
  RemoveItem,        // provably unreachable function/type/custom section
};

inline constexpr MutationKind kAllMutationKinds[] = {
    MutationKind::CodeMotion,    MutationKind::Peephole,
    MutationKind::AddFunction,   MutationKind::AddType,
    MutationKind::AddCustomSection, MutationKind::RemoveItem,
};

std::string_view mutation_kind_name(MutationKind k);
std::optional<MutationKind> mutation_kind_from_name(std::string_view name);

/// Names of the individual peephole rules, in canonical order. A spec may
/// restrict peephole to a subset of these.
inline constexpr std::string_view kPeepholeRuleNames[] = {
    "operand-swap", "add-zero",      "xor-zero", "mul-one",
    "const-split",  "double-negate", "nop-insert", "select-wrap",
};

/// One requested transformation. `seed` drives both site selection and any
/// value choices, so (module, spec) -> output is a pure function.
struct TransformationSpec {
  MutationKind kind = MutationKind::Peephole;
  uint64_t seed = 0;
  /// Peephole only: restrict to these rule names (see kPeepholeRuleNames);
  /// empty means all rules are allowed.
  std::vector<std::string> rules;

  bool operator==(const TransformationSpec&) const = default;
};

struct TraceEntry {
  uint64_t iteration = 0;
  TransformationSpec spec;
  /// Human-readable descriptor of the chosen site ("none" when nothing
  /// applied). Informational; replay re-derives the site from the seed.
  std::string site;
  bool applied = false;

  bool operator==(const TraceEntry&) const = default;
};

/// Record of a transformation run: enough to replay it bit-exactly.
struct MutationTrace {
  uint64_t input_digest = 0;
  uint64_t output_digest = 0;
  std::vector<TraceEntry> entries;

  bool operator==(const MutationTrace&) const = default;
};

/// Applies one transformation to a valid module. When no applicable site
/// exists the module is returned unchanged with applied=false; that is not
/// an error. The output always validates.
std::pair<Module, TraceEntry> apply_transformation(const Module& m,
                                                   const TransformationSpec& spec);

/// Raised by stack_transformations when a differential checkpoint finds the
/// mutated module observably different from the original. Carries the trace
/// prefix up to and including the offending iteration.
class SemanticsViolationError : public Error {
 public:
  SemanticsViolationError(uint64_t iteration, const std::string& detail,
                          MutationTrace prefix)
      : Error(ErrorCode::SemanticsViolation,
              "semantics violated at iteration " + std::to_string(iteration) +
                  ": " + detail),
        iteration_(iteration),
        trace_(std::move(prefix)) {}

  uint64_t iteration() const { return iteration_; }
  const MutationTrace& trace() const { return trace_; }

 private:
  uint64_t iteration_;
  MutationTrace trace_;
};

struct StackResult {
  Module module;
  MutationTrace trace;
};

/// Applies `n` transformations drawn uniformly from `allowed` (seeded), and
/// every `check_every` iterations differentially checks the current module
/// against the original, aborting with SemanticsViolationError on divergence.
StackResult stack_transformations(const Module& m, uint64_t n, uint64_t seed,
                                  std::span<const MutationKind> allowed,
                                  uint64_t check_every = 100);

/// JSONL round-trip: a header line with the digests, then one line per entry.
std::string trace_to_jsonl(const MutationTrace& trace);
MutationTrace trace_from_jsonl(std::string_view text);

/// Re-applies a trace to the module it was recorded against, verifying the
/// input digest, the per-entry applied flags, and the output digest.
Module replay_trace(const Module& m, const MutationTrace& trace);

}  // namespace wasmshade
