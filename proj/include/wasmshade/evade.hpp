#pragma once

#include "wasmshade/detect.hpp"
#include "wasmshade/mutate.hpp"

namespace wasmshade {

// Detector-guided transformation search: stack semantics-preserving
// mutations until the detector's miner probability falls under a target.

enum class EvasionOutcome : uint8_t { Evaded, Exhausted };

std::string_view evasion_outcome_name(EvasionOutcome o);

struct EvasionStep {
  uint64_t iteration = 0;  // 1-based, strictly increasing
  TransformationSpec spec;
  double probability = 0.0;  // detector output after this step
  bool operator==(const EvasionStep&) const = default;
};

struct EvasionTrace {
  uint64_t seed = 0;
  double target = 0.5;
  double initial_probability = 0.0;
  double final_probability = 0.0;
  EvasionOutcome outcome = EvasionOutcome::Exhausted;
  std::vector<EvasionStep> steps;
  /// 1:1 with steps; replay_trace(input, mutations) rebuilds the final
  /// module and re-verifies the digests.
  MutationTrace mutations;
};

/// Blind stacking: draws kinds uniformly from `allowed`, applies them in
/// sequence, and records the detector probability after every iteration.
/// Stops as soon as the probability drops below `target_probability`
/// (Evaded) or after `max_iters` (Exhausted). The module is differentially
/// checked against the original every `check_every` iterations and at the
/// stopping point; a divergence raises SemanticsViolationError. The input
/// must be flagged by the detector (probability >= 0.5) to begin with.
EvasionTrace evade_random(const Module& m, const DetectorModel& model,
                          uint64_t max_iters, uint64_t seed,
                          std::span<const MutationKind> allowed = kAllMutationKinds,
                          double target_probability = 0.5,
                          uint64_t check_every = 100);

struct RankedKind {
  MutationKind kind = MutationKind::Peephole;
  double mean_drop = 0.0;  // mean probability decrease over the trials
  bool operator==(const RankedKind&) const = default;
};

/// Applies `trials_per_kind` seeded single mutations per kind and ranks the
/// kinds by mean probability drop, largest first; exact ties fall back to
/// the kind name. trials_per_kind must be >= 1.
std::vector<RankedKind> rank_transformations(
    const Module& m, const DetectorModel& model, uint32_t trials_per_kind,
    uint64_t seed, std::span<const MutationKind> allowed = kAllMutationKinds);

/// Ranks once up front, then runs the same walk as evade_random restricted
/// to the `top_k` best kinds.
EvasionTrace evade_strategic(const Module& m, const DetectorModel& model,
                             uint32_t top_k, uint64_t max_iters, uint64_t seed,
                             std::span<const MutationKind> allowed = kAllMutationKinds,
                             double target_probability = 0.5,
                             uint64_t check_every = 100,
                             uint32_t trials_per_kind = 30);

/// One JSON document embedding the replayable mutation trace.
std::string evasion_trace_to_json(const EvasionTrace& t);
EvasionTrace evasion_trace_from_json(std::string_view text);

/// Plot-ready rows: "iteration,kind,probability".
std::string evasion_trace_csv(const EvasionTrace& t);

}  // namespace wasmshade
