#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wasmshade/module.hpp"

namespace wasmshade {

// ---------------------------------------------------------------------------
// Grayscale imaging: a binary rendered as a fixed-size picture, the input
// representation for the image-based detectors.

struct GrayImage {
  static constexpr size_t kSide = 100;
  std::array<uint8_t, kSide * kSide> pixels{};  // row-major

  uint8_t at(size_t row, size_t col) const { return pixels[row * kSide + col]; }
  uint8_t& at(size_t row, size_t col) { return pixels[row * kSide + col]; }
  bool operator==(const GrayImage&) const = default;
};

/// Lays the bytes row-major into the smallest square that holds them
/// (zero-padded), then resamples to 100x100 by nearest neighbor, sampling
/// source cell (i*w/100, j*w/100). Throws Error(EmptyInput) on zero bytes.
GrayImage to_grayscale(std::span<const uint8_t> bytes);

// ---------------------------------------------------------------------------
// Structural features: a fixed-order numeric summary of a module.

using FeatureVector = std::vector<double>;

/// Canonical feature order; the length of this list is the dimensionality.
std::span<const char* const> feature_names();

/// All features are finite and >= 0. Custom sections influence only the
/// "size" and "custom_byte_share" entries, so detectors that exclude those
/// two are blind to appended metadata.
FeatureVector extract_features(const Module& m);

// ---------------------------------------------------------------------------
// Labeled corpus.

struct LabeledSample {
  std::string name;
  std::vector<uint8_t> bytes;
  bool miner = false;
};
using LabeledCorpus = std::vector<LabeledSample>;

/// Reads a manifest (either a plain JSON array of {path|file, label, name}
/// or an object with a "modules" array) and loads each binary relative to
/// the manifest's directory. Labels must be "miner" or "benign".
LabeledCorpus load_labeled_corpus(const std::string& manifest_path);

// ---------------------------------------------------------------------------
// Detector models.

enum class DetectorKind : uint8_t {
  ImageCentroid,
  ImageLogistic,
  FeatureNaiveBayes,
  FeatureLogistic,
  CfgRules,
};

std::string_view detector_kind_name(DetectorKind k);
std::optional<DetectorKind> detector_kind_from_name(std::string_view name);

struct RuleThresholds {
  uint32_t xor_ops = 6;  // xor+rotate+shift ops needed in one cycle
  uint32_t mem_ops = 4;  // loads+stores needed in one cycle
  uint32_t trip = 16;    // minimum estimated iteration potential
  bool operator==(const RuleThresholds&) const = default;
};

struct DetectorModel {
  DetectorKind kind = DetectorKind::CfgRules;
  uint32_t version = 1;
  uint64_t seed = 0;
  uint64_t corpus_digest = 0;

  // image-centroid (pixel/255 space)
  std::vector<double> centroid_miner;
  std::vector<double> centroid_benign;
  double sharpness = 24.0;  // inverse-distance exponent

  // logistic heads (image or feature)
  std::vector<double> weights;
  double bias = 0.0;

  // feature standardization (feature-logistic)
  std::vector<double> feat_mean;
  std::vector<double> feat_stdev;

  // gaussian naive bayes
  std::vector<double> nb_mean_miner;
  std::vector<double> nb_var_miner;
  std::vector<double> nb_mean_benign;
  std::vector<double> nb_var_benign;
  double nb_prior_miner = 0.5;

  // ablation: indices into feature_names() used by feature models;
  // empty means all features
  std::vector<uint32_t> feature_subset;

  RuleThresholds rules;

  bool operator==(const DetectorModel&) const = default;
};

/// Versioned JSON, reloadable bit-exactly (doubles round-trip).
std::string model_to_json(const DetectorModel& model);
DetectorModel model_from_json(std::string_view text);

struct TrainOptions {
  uint32_t epochs = 400;
  double learning_rate = 0.0;  // 0 = per-kind default
  double variance_floor = 1e-6;
  std::vector<uint32_t> feature_subset;  // feature models only
};

/// kind must be ImageCentroid or ImageLogistic. Samples are normalized
/// (parse + re-encode) before imaging. Throws Error(DegenerateCorpus) unless
/// both labels are present, Error(KindMismatch) for other kinds.
DetectorModel train_image_detector(const LabeledCorpus& corpus,
                                   DetectorKind kind, uint64_t seed,
                                   const TrainOptions& opts = {});

/// kind must be FeatureNaiveBayes or FeatureLogistic.
DetectorModel train_feature_detector(const LabeledCorpus& corpus,
                                     DetectorKind kind, uint64_t seed,
                                     const TrainOptions& opts = {});

DetectorModel make_cfg_rules_model(const RuleThresholds& rules = {});

struct Verdict {
  double miner_probability = 0.0;
  bool miner = false;  // miner_probability >= threshold
  std::string evidence;
};

/// Deterministic: (model, module) -> Verdict is pure. Throws
/// Error(KindMismatch) when the model's parameters do not fit the input
/// pipeline (wrong vector sizes, unknown kind).
Verdict predict(const DetectorModel& model, const Module& m,
                double threshold = 0.5);

// ---------------------------------------------------------------------------
// Rule-based detection: lifted IR, interprocedural CFG, cycle rules.

enum class OpCategory : uint8_t {
  Xor,
  Rotate,
  Shift,
  AddMul,
  Load,
  Store,
  Other,
};

std::string_view op_category_name(OpCategory c);

struct IROp {
  OpCategory category = OpCategory::Other;
  uint8_t arity = 0;  // operands consumed
};

enum class Terminator : uint8_t {
  Fallthrough,
  Branch,
  CondBranch,
  Switch,
  Return,
  Unreachable,
};

struct IRBlock {
  std::vector<IROp> ops;
  Terminator term = Terminator::Fallthrough;
  std::vector<uint32_t> succs;          // block ids within the same function
  std::vector<uint32_t> calls;          // direct call targets (absolute)
  std::vector<FuncType> indirect_sigs;  // expected call_indirect signatures
  // Set when term == CondBranch and the condition was computed as
  // [local.get; i32.const K; compare] immediately before the branch:
  // (taken-successor block, K). The counter pattern behind trip estimates.
  std::optional<std::pair<uint32_t, uint64_t>> cond_bound;
};

struct IRFunction {
  FuncType type;
  std::vector<IRBlock> blocks;  // entry is block 0; empty for imports
};

struct IRProgram {
  std::vector<IRFunction> functions;    // absolute index space, imports first
  std::vector<uint32_t> table_entries;  // call_indirect-reachable functions
};

IRProgram lift_to_ir(const Module& m);

struct ICFG {
  struct Node {
    uint32_t func = 0;
    uint32_t block = 0;
    uint32_t xor_rot_shift = 0;  // ops in this block by category group
    uint32_t mem_ops = 0;        // loads + stores
    bool cond = false;           // terminator is a conditional branch
    bool loop_header = false;    // target of a DFS back edge
    // counter pattern: (taken-successor node id, K)
    std::optional<std::pair<uint32_t, uint64_t>> cond_bound;
  };
  std::vector<Node> nodes;
  std::vector<std::vector<uint32_t>> edges;  // intraprocedural + call edges
};

ICFG build_icfg(const IRProgram& p);

/// Finds cycles (strongly connected components, including interprocedural
/// recursion) and scores the best one against three rule groups:
/// xor/rotate/shift count, memory traffic, and iteration potential.
/// miner_probability = satisfied groups / 3. Iteration potential comes from
/// recognized counter patterns on the cycle's conditional branches: the
/// largest constant K wins, a comparison against 0 or the absence of any
/// recognizable pattern counts as unbounded.
Verdict detect_mining_rules(const ICFG& g, const RuleThresholds& rules = {},
                            double threshold = 0.5);

}  // namespace wasmshade
