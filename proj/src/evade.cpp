#include "wasmshade/evade.hpp"

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wasmshade/common.hpp"
#include "wasmshade/interp.hpp"
#include "wasmshade/rng.hpp"

namespace wasmshade {

namespace {

using json = nlohmann::json;

void require_flagged(const DetectorModel& model, const Module& m) {
  if (!predict(model, m).miner)
    throw Error(ErrorCode::InvalidArgument,
                "input is not flagged by the detector; nothing to evade");
}

// Shared walk behind evade_random and evade_strategic. `pool` is the kind
// pool the meta generator draws from; its order matters for the draws.
EvasionTrace run_walk(const Module& m, const DetectorModel& model,
                      uint64_t max_iters, uint64_t seed,
                      std::span<const MutationKind> pool, double target,
                      uint64_t check_every) {
  if (pool.empty())
    throw Error(ErrorCode::InvalidArgument, "kind pool must be non-empty");
  if (max_iters < 1)
    throw Error(ErrorCode::InvalidArgument, "max_iters must be at least 1");
  if (check_every < 1)
    throw Error(ErrorCode::InvalidArgument, "check_every must be at least 1");
  if (!(target > 0.0 && target < 1.0))
    throw Error(ErrorCode::InvalidArgument,
                "target probability must lie in (0, 1)");
  require_flagged(model, m);

  EvasionTrace t;
  t.seed = seed;
  t.target = target;
  t.initial_probability = predict(model, m).miner_probability;
  t.final_probability = t.initial_probability;
  t.outcome = EvasionOutcome::Exhausted;
  t.mutations.input_digest = module_digest(m);

  auto suite = make_differential_suite(m);
  Module cur = m;
  Rng meta(seed);
  for (uint64_t it = 0; it < max_iters; ++it) {
    TransformationSpec spec;
    spec.kind = pool[meta.below(pool.size())];
    spec.seed = meta.next();
    auto [next, entry] = apply_transformation(cur, spec);
    entry.iteration = it;
    t.mutations.entries.push_back(std::move(entry));
    if (t.mutations.entries.back().applied) cur = std::move(next);

    double p = predict(model, cur).miner_probability;
    t.steps.push_back({it, spec, p});
    t.final_probability = p;

    // Checkpoint on the cadence and at whichever iteration we stop on, so
    // the module we hand back is always differentially vetted.
    bool evaded = p < target;
    if (evaded || (it + 1) % check_every == 0 || it + 1 == max_iters) {
      auto dr = differential_check(m, cur, suite, 4 * kDefaultFuel);
      if (!dr.equivalent) {
        t.mutations.output_digest = module_digest(cur);
        throw SemanticsViolationError(it, dr.detail, std::move(t.mutations));
      }
    }
    if (evaded) {
      t.outcome = EvasionOutcome::Evaded;
      break;
    }
  }
  t.mutations.output_digest = module_digest(cur);
  return t;
}

}  // namespace

std::string_view evasion_outcome_name(EvasionOutcome o) {
  return o == EvasionOutcome::Evaded ? "evaded" : "exhausted";
}

EvasionTrace evade_random(const Module& m, const DetectorModel& model,
                          uint64_t max_iters, uint64_t seed,
                          std::span<const MutationKind> allowed,
                          double target_probability, uint64_t check_every) {
  return run_walk(m, model, max_iters, seed, allowed, target_probability,
                  check_every);
}

std::vector<RankedKind> rank_transformations(
    const Module& m, const DetectorModel& model, uint32_t trials_per_kind,
    uint64_t seed, std::span<const MutationKind> allowed) {
  if (trials_per_kind < 1)
    throw Error(ErrorCode::InvalidArgument,
                "need at least one trial per kind to rank");
  if (allowed.empty())
    throw Error(ErrorCode::InvalidArgument, "kind pool must be non-empty");
  require_flagged(model, m);

  double p0 = predict(model, m).miner_probability;
  Rng rng(seed);
  std::vector<RankedKind> out;
  out.reserve(allowed.size());
  for (MutationKind kind : allowed) {
    double sum = 0.0;
    for (uint32_t trial = 0; trial < trials_per_kind; ++trial) {
      TransformationSpec spec;
      spec.kind = kind;
      spec.seed = rng.next();
      Module mut = apply_transformation(m, spec).first;
      sum += p0 - predict(model, mut).miner_probability;
    }
    out.push_back({kind, sum / trials_per_kind});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedKind& a, const RankedKind& b) {
                     if (a.mean_drop != b.mean_drop)
                       return a.mean_drop > b.mean_drop;
                     return mutation_kind_name(a.kind) <
                            mutation_kind_name(b.kind);
                   });
  return out;
}

EvasionTrace evade_strategic(const Module& m, const DetectorModel& model,
                             uint32_t top_k, uint64_t max_iters, uint64_t seed,
                             std::span<const MutationKind> allowed,
                             double target_probability, uint64_t check_every,
                             uint32_t trials_per_kind) {
  if (top_k < 1)
    throw Error(ErrorCode::InvalidArgument, "top_k must be at least 1");
  auto ranking = rank_transformations(m, model, trials_per_kind, seed, allowed);
  size_t k = std::min<size_t>(top_k, ranking.size());
  std::vector<MutationKind> pool;
  pool.reserve(k);
  for (size_t i = 0; i < k; ++i) pool.push_back(ranking[i].kind);
  return run_walk(m, model, max_iters, seed, pool, target_probability,
                  check_every);
}

// ---------------------------------------------------------------------------
// Serialization

std::string evasion_trace_to_json(const EvasionTrace& t) {
  json j;
  j["format"] = "wasm-shade-evasion";
  j["version"] = 1;
  j["seed"] = t.seed;
  j["target"] = t.target;
  j["initial_probability"] = t.initial_probability;
  j["final_probability"] = t.final_probability;
  j["outcome"] = std::string(evasion_outcome_name(t.outcome));
  json steps = json::array();
  for (const EvasionStep& s : t.steps) {
    json e = {{"iteration", s.iteration},
              {"kind", mutation_kind_name(s.spec.kind)},
              {"seed", s.spec.seed},
              {"probability", s.probability}};
    if (!s.spec.rules.empty()) e["rules"] = s.spec.rules;
    steps.push_back(std::move(e));
  }
  j["steps"] = std::move(steps);
  j["mutation_trace"] = trace_to_jsonl(t.mutations);
  return j.dump(2) + "\n";
}

EvasionTrace evasion_trace_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("evasion trace is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "wasm-shade-evasion")
      throw Error(ErrorCode::InvalidArgument,
                  "not an evasion trace document");
    if (j.value("version", 0) != 1)
      throw Error(ErrorCode::InvalidArgument,
                  "unsupported evasion trace version");
    EvasionTrace t;
    t.seed = j.at("seed").get<uint64_t>();
    t.target = j.at("target").get<double>();
    t.initial_probability = j.at("initial_probability").get<double>();
    t.final_probability = j.at("final_probability").get<double>();
    std::string outcome = j.at("outcome").get<std::string>();
    if (outcome == "evaded")
      t.outcome = EvasionOutcome::Evaded;
    else if (outcome == "exhausted")
      t.outcome = EvasionOutcome::Exhausted;
    else
      throw Error(ErrorCode::InvalidArgument,
                  "unknown evasion outcome '" + outcome + "'");
    for (const json& e : j.at("steps")) {
      EvasionStep s;
      s.iteration = e.at("iteration").get<uint64_t>();
      auto kind = mutation_kind_from_name(e.at("kind").get<std::string>());
      if (!kind)
        throw Error(ErrorCode::InvalidArgument,
                    "unknown kind " + e.at("kind").get<std::string>());
      s.spec.kind = *kind;
      s.spec.seed = e.at("seed").get<uint64_t>();
      if (e.contains("rules"))
        s.spec.rules = e["rules"].get<std::vector<std::string>>();
      s.probability = e.at("probability").get<double>();
      if (!(s.probability >= 0.0 && s.probability <= 1.0))
        throw Error(ErrorCode::InvalidArgument,
                    "step probability out of [0, 1]");
      if (!t.steps.empty() && s.iteration <= t.steps.back().iteration)
        throw Error(ErrorCode::InvalidArgument,
                    "step iterations must be strictly increasing");
      t.steps.push_back(std::move(s));
    }
    t.mutations = trace_from_jsonl(j.at("mutation_trace").get<std::string>());
    if (t.mutations.entries.size() != t.steps.size())
      throw Error(ErrorCode::InvalidArgument,
                  "mutation trace does not match the step list");
    for (size_t i = 0; i < t.steps.size(); ++i)
      if (!(t.mutations.entries[i].spec == t.steps[i].spec))
        throw Error(ErrorCode::InvalidArgument,
                    "mutation trace does not match the step list");
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("malformed evasion trace: ") + e.what());
  }
}

std::string evasion_trace_csv(const EvasionTrace& t) {
  std::string out = "iteration,kind,probability\n";
  char buf[96];
  for (const EvasionStep& s : t.steps) {
    std::snprintf(buf, sizeof buf, "%llu,%s,%.17g\n",
                  static_cast<unsigned long long>(s.iteration),
                  std::string(mutation_kind_name(s.spec.kind)).c_str(),
                  s.probability);
    out += buf;
  }
  return out;
}

}  // namespace wasmshade
