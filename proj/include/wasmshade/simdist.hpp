#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wasmshade/module.hpp"

namespace wasmshade {

/// One 64-bit hash per instruction (FNV-1a over the canonical text), the
/// unit the alignment distance works on.
using IntSeq = std::vector<uint64_t>;

IntSeq hash_instructions(const InstrSeq& s);

/// Per-cell cost when aligning two hash sequences. Mismatch (0/1) is the
/// default: it keeps distances interpretable as "number of adjustments"
/// instead of depending on arbitrary hash magnitudes. AbsDiff keeps the
/// raw |a-b| magnitude behaviour as a fidelity mode.
enum class CostFn : uint8_t { Mismatch, AbsDiff };
std::string_view cost_fn_name(CostFn c);

enum class DtwMethod : uint8_t { Exact, Fast };

struct DistanceReport {
  double distance = 0.0;
  DtwMethod method = DtwMethod::Exact;
  uint32_t radius = 0;  // meaningful when method == Fast
  size_t len_a = 0;
  size_t len_b = 0;
  CostFn cost = CostFn::Mismatch;

  /// "exact" or "fast(<radius>)"
  std::string method_text() const;
};

inline constexpr uint32_t kFastDtwDefaultRadius = 10;
/// Below this length fastdtw stops coarsening and runs the exact DP.
inline constexpr size_t kFastDtwCutoff = 64;
/// Exact DTW refuses pairs with more matrix cells than this; callers are
/// expected to switch to fastdtw.
inline constexpr uint64_t kMaxExactCells = 200'000'000;

/// Exact dynamic-programming optimum. Errors: EmptySequence when either
/// input is empty, PairTooLarge beyond kMaxExactCells.
DistanceReport dtw(const IntSeq& a, const IntSeq& b,
                   CostFn cost = CostFn::Mismatch);

/// Coarsen-project-refine approximation (window = projected path ± radius).
/// Always an upper bound of the exact optimum; equal to it when the radius
/// covers the longer sequence.
DistanceReport fastdtw(const IntSeq& a, const IntSeq& b,
                       uint32_t radius = kFastDtwDefaultRadius,
                       CostFn cost = CostFn::Mismatch);

/// extract -> hash -> align for two whole modules.
DistanceReport distance_report(const Module& orig, const Module& obf,
                               DtwMethod method = DtwMethod::Exact,
                               CostFn cost = CostFn::Mismatch,
                               uint32_t radius = kFastDtwDefaultRadius);

/// CSV serialization for plotting: one row per compared pair.
std::string distance_csv_header();
std::string distance_csv_row(std::string_view pair_id,
                             const DistanceReport& r);

}  // namespace wasmshade
