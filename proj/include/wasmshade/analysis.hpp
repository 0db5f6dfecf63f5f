#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wasmshade/module.hpp"

namespace wasmshade {

/// Per-boundary typing facts for one function body. Boundary i is the point
/// before instruction i; boundary body.size() is the point after the last
/// instruction (just past the closing `end`).
struct BoundaryInfo {
  bool reachable = false;
  /// Operand stack, bottom first. Only meaningful at reachable boundaries;
  /// at unreachable ones the polymorphic part is not representable.
  std::vector<ValType> stack;
  /// Open control frames as instruction indices of their openers, outermost
  /// first. The implicit function frame is not listed.
  std::vector<uint32_t> frames;
};

struct BodyTyping {
  std::vector<BoundaryInfo> boundaries;  // body.size() + 1 entries

  /// For each opener (block/loop/if): index of the matching `end`; for every
  /// other instruction -1.
  std::vector<int32_t> matching_end;
  /// For each `if` with an else arm: index of the `else`; otherwise -1.
  std::vector<int32_t> matching_else;
  /// For each `end`/`else`: index of its opener, or -1 for the body-closing
  /// `end` (function frame) and for non-end instructions.
  std::vector<int32_t> opener_of;
};

struct TypingResult {
  BodyTyping typing;
  /// First type error, or nullopt if the body is well-typed. `typing` is
  /// only meaningful when there is no error.
  std::optional<std::string> error;
};

/// Runs the standard stack-discipline validation algorithm over one body and
/// records boundary snapshots. The validator reports `error`; the mutation
/// engine consumes `typing` of bodies already known valid.
TypingResult type_function_body(const Module& m, const Function& f);

/// Result types of the label a branch at `instr_index` with relative depth
/// `label` targets (loop labels have no operands in this subset).
std::vector<ValType> branch_label_types(const Module& m, const Function& f,
                                        const BodyTyping& t,
                                        uint32_t instr_index, uint32_t label);

}  // namespace wasmshade
