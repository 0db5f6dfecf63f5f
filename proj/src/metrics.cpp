#include "wasmshade/metrics.hpp"

#include <chrono>

#include "wasmshade/interp.hpp"

namespace wasmshade {

double precision(const ConfusionCounts& c) {
  uint64_t denom = c.tp + c.fp;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / denom;
}

double recall(const ConfusionCounts& c) {
  uint64_t denom = c.tp + c.fn;
  return denom == 0 ? 0.0 : static_cast<double>(c.tp) / denom;
}

double f1(const ConfusionCounts& c) {
  double p = precision(c), r = recall(c);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

SizeMetric size_increase(uint64_t before, uint64_t after) {
  if (before == 0)
    throw Error(ErrorCode::ZeroBaseline, "size baseline is zero");
  SizeMetric s;
  s.before = before;
  s.after = after;
  s.increase_pct = (static_cast<double>(after) - static_cast<double>(before)) /
                   static_cast<double>(before) * 100.0;
  return s;
}

namespace {

// Nonce arguments for one call. Integers carry the masked counter so input
// data varies without letting a loop-driving parameter explode the fuel
// budget; floats get a small derived value.
std::vector<Value> nonce_args(const FuncType& type, uint64_t counter) {
  std::vector<Value> args;
  for (ValType p : type.params) {
    uint64_t n = counter & 63;
    switch (p) {
      case ValType::I32: args.push_back(Value::make_i32(static_cast<int32_t>(n))); break;
      case ValType::I64: args.push_back(Value::make_i64(static_cast<int64_t>(n))); break;
      case ValType::F32: args.push_back(Value::make_f32(static_cast<float>(n))); break;
      case ValType::F64: args.push_back(Value::make_f64(static_cast<double>(n))); break;
    }
  }
  return args;
}

const FuncType& export_type(const Module& m, const std::string& name) {
  auto idx = m.find_export(name, ExternalKind::Func);
  if (!idx)
    throw Error(ErrorCode::NoSuchExport, "no exported function '" + name + "'");
  return m.func_type(*idx);
}

ExecResult checked_invoke(Instance& inst, const std::string& name,
                          std::span<const Value> args) {
  ExecResult r = inst.invoke(name, args);
  if (r.outcome != ExecResult::Outcome::Values)
    throw Error(ErrorCode::InvalidArgument,
                "bench workload did not complete: " + r.summary());
  return r;
}

}  // namespace

HashRateMetric bench_hash_rate(const Module& m, const std::string& export_name,
                               double warmup_seconds, double duration_seconds) {
  if (duration_seconds <= 0)
    throw Error(ErrorCode::InvalidArgument, "bench duration must be positive");
  const FuncType& type = export_type(m, export_name);
  ImportBindings bindings = default_bindings(m);

  HashRateMetric metric;
  {
    // The proxy comes from a fresh instance so global/memory state from the
    // wall loop can't leak into it.
    Instance fresh(m, bindings);
    metric.fuel_per_call =
        checked_invoke(fresh, export_name, nonce_args(type, 0)).fuel_used;
  }

  using clock = std::chrono::steady_clock;
  Instance inst(m, bindings);
  uint64_t counter = 0;
  auto deadline = clock::now() + std::chrono::duration<double>(warmup_seconds);
  while (clock::now() < deadline)
    checked_invoke(inst, export_name, nonce_args(type, counter++));

  auto start = clock::now();
  deadline = start + std::chrono::duration<double>(duration_seconds);
  uint64_t done = 0;
  while (clock::now() < deadline) {
    checked_invoke(inst, export_name, nonce_args(type, counter++));
    ++done;
  }
  metric.hashes = done;
  metric.seconds = std::chrono::duration<double>(clock::now() - start).count();
  metric.rate = metric.seconds > 0 ? done / metric.seconds : 0.0;
  return metric;
}

double relative_rate_pct(const HashRateMetric& baseline,
                         const HashRateMetric& variant) {
  if (baseline.rate <= 0)
    throw Error(ErrorCode::ZeroBaseline, "baseline rate is zero");
  return variant.rate / baseline.rate * 100.0;
}

double relative_fuel_rate_pct(const HashRateMetric& baseline,
                              const HashRateMetric& variant) {
  if (baseline.fuel_per_call == 0)
    throw Error(ErrorCode::ZeroBaseline, "baseline fuel is zero");
  if (variant.fuel_per_call == 0)
    throw Error(ErrorCode::ZeroBaseline, "variant fuel is zero");
  // hashes-per-fuel ratio: baseline_fuel / variant_fuel.
  return static_cast<double>(baseline.fuel_per_call) /
         static_cast<double>(variant.fuel_per_call) * 100.0;
}

}  // namespace wasmshade
