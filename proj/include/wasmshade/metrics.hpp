#pragma once

#include <string>

#include "wasmshade/module.hpp"

namespace wasmshade {

struct ConfusionCounts {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t fn = 0;
  uint64_t tn = 0;
};

// Zero denominators yield 0 by convention (an all-negative prediction has
// precision 0, not NaN).
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double f1(const ConfusionCounts& c);

struct SizeMetric {
  uint64_t before = 0;
  uint64_t after = 0;
  double increase_pct = 0;  // (after - before) / before * 100, may be negative
};

/// Throws Error(ZeroBaseline) when `before` is 0.
SizeMetric size_increase(uint64_t before, uint64_t after);

struct HashRateMetric {
  uint64_t hashes = 0;       // completed invocations in the measured window
  double seconds = 0;        // length of the measured window
  double rate = 0;           // hashes / seconds
  uint64_t fuel_per_call = 0;  // executed-instruction count of one nonce-0 call
};

/// Invokes `export_name` in a loop, feeding the call counter as the nonce
/// argument(s). Wall-clock rate is measured for `duration_seconds` after
/// `warmup_seconds`; `fuel_per_call` is taken from a single fresh-instance
/// invocation and is exactly reproducible, unlike the wall numbers.
HashRateMetric bench_hash_rate(const Module& m, const std::string& export_name,
                               double warmup_seconds = 2.0,
                               double duration_seconds = 10.0);

/// variant rate as a percentage of baseline (100 = unchanged, <100 = slower).
double relative_rate_pct(const HashRateMetric& baseline,
                         const HashRateMetric& variant);

/// Same, from the deterministic fuel proxy: a call that executes twice the
/// instructions runs at 50%.
double relative_fuel_rate_pct(const HashRateMetric& baseline,
                              const HashRateMetric& variant);

}  // namespace wasmshade
