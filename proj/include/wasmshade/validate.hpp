#pragma once

#include <string>
#include <vector>

#include "wasmshade/module.hpp"

namespace wasmshade {

struct Violation {
  std::string where;    // e.g. "func 3", "export 'main'"
  std::string message;
  bool operator==(const Violation&) const = default;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

/// Structural and type validation under the 1.0 core subset rules:
/// index bounds everywhere, body typing (stack discipline, block nesting,
/// branch targets, unreachable polymorphism), constant-expression rules for
/// globals and segment offsets, alignment limits, single-memory/table limits.
ValidationResult validate(const Module& m);

/// Throws Error(InvalidModule) when validation fails. Used by operations
/// whose precondition is a valid module.
void require_valid(const Module& m, const char* who);

}  // namespace wasmshade
