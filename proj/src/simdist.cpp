#include "wasmshade/simdist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wasmshade/validate.hpp"

namespace wasmshade {

namespace {

// Path sums can reach (len_a + len_b) * 2^64 with the absdiff cost, so the
// DP accumulates in 128 bits and only the report narrows to double.
using Acc = unsigned __int128;
constexpr Acc kUnreached = Acc(1) << 100;

uint64_t cell_cost(uint64_t a, uint64_t b, CostFn cost) {
  if (cost == CostFn::Mismatch) return a == b ? 0 : 1;
  return a > b ? a - b : b - a;
}

void require_nonempty(const IntSeq& a, const IntSeq& b) {
  if (a.empty() || b.empty())
    throw Error(ErrorCode::EmptySequence,
                "dtw needs two non-empty sequences (got " +
                    std::to_string(a.size()) + " and " +
                    std::to_string(b.size()) + ")");
}

void guard_cells(size_t n, size_t m) {
  if (static_cast<uint64_t>(n) * static_cast<uint64_t>(m) > kMaxExactCells)
    throw Error(ErrorCode::PairTooLarge,
                "exact dtw matrix would need " + std::to_string(n) + "x" +
                    std::to_string(m) + " cells; use fastdtw");
}

// Rolling-row exact DP; no path, O(m) memory.
Acc dtw_distance_only(const IntSeq& a, const IntSeq& b, CostFn cost) {
  size_t n = a.size(), m = b.size();
  std::vector<Acc> prev(m), cur(m);
  prev[0] = cell_cost(a[0], b[0], cost);
  for (size_t j = 1; j < m; ++j) prev[j] = prev[j - 1] + cell_cost(a[0], b[j], cost);
  for (size_t i = 1; i < n; ++i) {
    cur[0] = prev[0] + cell_cost(a[i], b[0], cost);
    for (size_t j = 1; j < m; ++j) {
      Acc best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = best + cell_cost(a[i], b[j], cost);
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

// --- windowed DP with path reconstruction (fastdtw machinery) --------------

struct Window {
  // inclusive column range per row
  std::vector<uint32_t> lo, hi;
};

Window full_window(size_t n, size_t m) {
  Window w;
  w.lo.assign(n, 0);
  w.hi.assign(n, static_cast<uint32_t>(m - 1));
  return w;
}

struct PathResult {
  Acc dist = 0;
  std::vector<std::pair<uint32_t, uint32_t>> path;  // (row, col), start to end
};

PathResult dtw_path(const IntSeq& a, const IntSeq& b, const Window& w,
                    CostFn cost) {
  size_t n = a.size(), m = b.size();
  // Per-row slabs of DP values, kept alive for the backtrack.
  std::vector<std::vector<Acc>> rows(n);
  auto at = [&](size_t i, size_t j) -> Acc {
    if (i >= n || j >= m) return kUnreached;
    if (j < w.lo[i] || j > w.hi[i]) return kUnreached;
    return rows[i][j - w.lo[i]];
  };
  for (size_t i = 0; i < n; ++i) {
    rows[i].resize(w.hi[i] - w.lo[i] + 1);
    for (size_t j = w.lo[i]; j <= w.hi[i]; ++j) {
      Acc best;
      if (i == 0 && j == 0) {
        best = 0;
      } else {
        best = at(i - 1, j);
        best = std::min(best, at(i, j - 1));
        best = std::min(best, at(i - 1, j - 1));
      }
      rows[i][j - w.lo[i]] = best + cell_cost(a[i], b[j], cost);
    }
  }
  PathResult out;
  out.dist = at(n - 1, m - 1);
  size_t i = n - 1, j = m - 1;
  out.path.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(j)});
  while (i != 0 || j != 0) {
    Acc up = at(i - 1, j), left = at(i, j - 1), diag = at(i - 1, j - 1);
    if (diag <= up && diag <= left) {
      --i, --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
    out.path.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(j)});
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

// Halves a sequence. With the mismatch cost the pair is combined by hashing
// (equal coarse symbols iff both halves equal); with absdiff the numeric
// midpoint keeps magnitudes meaningful.
IntSeq coarsen(const IntSeq& s, CostFn cost) {
  IntSeq out;
  out.reserve(s.size() / 2 + 1);
  for (size_t i = 0; i + 1 < s.size(); i += 2) {
    if (cost == CostFn::Mismatch) {
      uint8_t buf[16];
      for (int k = 0; k < 8; ++k) {
        buf[k] = static_cast<uint8_t>(s[i] >> (8 * k));
        buf[8 + k] = static_cast<uint8_t>(s[i + 1] >> (8 * k));
      }
      out.push_back(fnv1a64(std::span<const uint8_t>(buf, 16)));
    } else {
      out.push_back((s[i] >> 1) + (s[i + 1] >> 1) + (s[i] & s[i + 1] & 1));
    }
  }
  if (s.size() & 1) out.push_back(s.back());
  return out;
}

// Projects a coarse path onto the fine grid and inflates it by the radius.
Window expand_window(const std::vector<std::pair<uint32_t, uint32_t>>& path,
                     size_t n, size_t m, uint32_t radius) {
  uint32_t last_col = static_cast<uint32_t>(m - 1);
  std::vector<uint32_t> raw_lo(n, last_col), raw_hi(n, 0);
  for (auto [ci, cj] : path) {
    for (uint32_t fi : {2 * ci, 2 * ci + 1}) {
      if (fi >= n) continue;
      raw_lo[fi] = std::min(raw_lo[fi], std::min(2 * cj, last_col));
      raw_hi[fi] = std::max(raw_hi[fi], std::min(2 * cj + 1, last_col));
    }
  }
  Window w;
  w.lo.resize(n);
  w.hi.resize(n);
  for (size_t i = 0; i < n; ++i) {
    size_t from = i > radius ? i - radius : 0;
    size_t to = std::min(n - 1, i + radius);
    uint32_t lo = last_col, hi = 0;
    for (size_t k = from; k <= to; ++k) {
      lo = std::min(lo, raw_lo[k]);
      hi = std::max(hi, raw_hi[k]);
    }
    w.lo[i] = lo > radius ? lo - radius : 0;
    w.hi[i] = std::min<uint64_t>(last_col, static_cast<uint64_t>(hi) + radius);
  }
  return w;
}

PathResult fastdtw_rec(const IntSeq& a, const IntSeq& b, uint32_t radius,
                       CostFn cost) {
  size_t n = a.size(), m = b.size();
  if (n <= kFastDtwCutoff || m <= kFastDtwCutoff ||
      radius >= std::max(n, m)) {
    guard_cells(n, m);
    return dtw_path(a, b, full_window(n, m), cost);
  }
  IntSeq ca = coarsen(a, cost), cb = coarsen(b, cost);
  PathResult coarse = fastdtw_rec(ca, cb, radius, cost);
  Window w = expand_window(coarse.path, n, m, radius);
  return dtw_path(a, b, w, cost);
}

std::string format_distance(double d) {
  if (d == std::floor(d) && std::abs(d) < 9e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(d));
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

}  // namespace

IntSeq hash_instructions(const InstrSeq& s) {
  IntSeq out;
  out.reserve(s.size());
  for (const auto& ins : s) out.push_back(fnv1a64(instr_text(ins)));
  return out;
}

std::string_view cost_fn_name(CostFn c) {
  return c == CostFn::Mismatch ? "mismatch" : "absdiff";
}

std::string DistanceReport::method_text() const {
  if (method == DtwMethod::Exact) return "exact";
  return "fast(" + std::to_string(radius) + ")";
}

DistanceReport dtw(const IntSeq& a, const IntSeq& b, CostFn cost) {
  require_nonempty(a, b);
  guard_cells(a.size(), b.size());
  DistanceReport r;
  r.distance = static_cast<double>(dtw_distance_only(a, b, cost));
  r.method = DtwMethod::Exact;
  r.len_a = a.size();
  r.len_b = b.size();
  r.cost = cost;
  return r;
}

DistanceReport fastdtw(const IntSeq& a, const IntSeq& b, uint32_t radius,
                       CostFn cost) {
  require_nonempty(a, b);
  DistanceReport r;
  r.distance = static_cast<double>(fastdtw_rec(a, b, radius, cost).dist);
  r.method = DtwMethod::Fast;
  r.radius = radius;
  r.len_a = a.size();
  r.len_b = b.size();
  r.cost = cost;
  return r;
}

DistanceReport distance_report(const Module& orig, const Module& obf,
                               DtwMethod method, CostFn cost,
                               uint32_t radius) {
  require_valid(orig, "distance original");
  require_valid(obf, "distance obfuscated");
  IntSeq a = hash_instructions(extract_instruction_sequence(orig));
  IntSeq b = hash_instructions(extract_instruction_sequence(obf));
  return method == DtwMethod::Exact ? dtw(a, b, cost)
                                    : fastdtw(a, b, radius, cost);
}

std::string distance_csv_header() {
  return "pair,len_a,len_b,method,cost,distance";
}

std::string distance_csv_row(std::string_view pair_id,
                             const DistanceReport& r) {
  std::string out(pair_id);
  out += ',';
  out += std::to_string(r.len_a);
  out += ',';
  out += std::to_string(r.len_b);
  out += ',';
  out += r.method_text();
  out += ',';
  out += cost_fn_name(r.cost);
  out += ',';
  out += format_distance(r.distance);
  return out;
}

}  // namespace wasmshade
