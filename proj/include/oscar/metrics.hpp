#pragma once

// Evaluation metrics: CDH, AUROC, entropy gap, CBW, EM/F1, span reduction,
// bootstrap CIs and correction precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oscar/core.hpp"
#include "oscar/localization.hpp"
#include "oscar/rng.hpp"

namespace oscar {

enum class LabelProvenance { synthetic_oracle, span_annotation, stepwise_alignment };

inline const char* provenance_name(LabelProvenance p) {
  switch (p) {
    case LabelProvenance::synthetic_oracle: return "synthetic_oracle";
    case LabelProvenance::span_annotation: return "span_annotation";
    case LabelProvenance::stepwise_alignment: return "stepwise_alignment";
  }
  return "?";
}

struct HallucinationLabels {
  LabelProvenance provenance = LabelProvenance::synthetic_oracle;
  std::vector<std::vector<bool>> hallucinated;  // [query][position]

  std::size_t count() const {
    std::size_t n = 0;
    for (auto& q : hallucinated)
      for (bool b : q) n += b;
    return n;
  }
};

// ---- CDH ----

// Pooled over queries: rank all positions by entropy (desc), ties to the
// lower (query, position); take ceil(k/100 * L_total).
inline std::optional<double> cdh(const std::vector<std::vector<double>>& entropy,
                                 const std::vector<std::vector<bool>>& hallucinated, double k) {
  if (!(k > 0.0 && k <= 100.0)) throw DataError("cdh: k must be in (0,100]");
  if (entropy.size() != hallucinated.size()) throw DataError("cdh: entropy and labels cover different queries");
  struct Cell {
    double h;
    std::size_t q;
    int i;
  };
  std::vector<Cell> cells;
  std::size_t n_hall = 0;
  for (std::size_t q = 0; q < entropy.size(); ++q) {
    if (entropy[q].size() != hallucinated[q].size()) throw DataError("cdh: label length differs from profile length");
    for (int i = 0; i < static_cast<int>(entropy[q].size()); ++i) {
      cells.push_back({entropy[q][i], q, i});
      n_hall += hallucinated[q][i];
    }
  }
  if (n_hall == 0) return std::nullopt;
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.h > b.h; });
  const std::size_t take = std::min(cells.size(), static_cast<std::size_t>(std::ceil(k / 100.0 * cells.size() - 1e-9)));
  std::size_t hit = 0;
  for (std::size_t j = 0; j < take; ++j) hit += hallucinated[cells[j].q][cells[j].i];
  return static_cast<double>(hit) / static_cast<double>(n_hall);
}

inline std::optional<double> cdh(const std::vector<double>& entropy, const std::vector<bool>& hallucinated, double k) {
  return cdh(std::vector<std::vector<double>>{entropy}, std::vector<std::vector<bool>>{hallucinated}, k);
}

inline std::vector<std::pair<int, std::optional<double>>> cdh_curve(const std::vector<std::vector<double>>& entropy,
                                                                    const std::vector<std::vector<bool>>& hallucinated) {
  std::vector<std::pair<int, std::optional<double>>> out;
  for (int k = 5; k <= 100; k += 5) out.push_back({k, cdh(entropy, hallucinated, k)});
  return out;
}

// ---- AUROC ----

// Mann-Whitney: P(score_pos > score_neg) + 1/2 P(equal).
inline double auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DataError("auroc: scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos = 0, neg = 0;
  for (bool b : labels) (b ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw DataError("auroc: needs both classes");
  // rank sum of positives with midranks for ties
  double rank_sum = 0.0;
  std::size_t a = 0;
  while (a < idx.size()) {
    std::size_t b = a;
    while (b < idx.size() && scores[idx[b]] == scores[idx[a]]) ++b;
    const double mid = (static_cast<double>(a + 1) + static_cast<double>(b)) / 2.0;
    for (std::size_t j = a; j < b; ++j)
      if (labels[idx[j]]) rank_sum += mid;
    a = b;
  }
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

struct Aggregation {
  enum class Mode { mean, max, topk } mode = Mode::mean;
  int k = 1;

  std::string name() const {
    switch (mode) {
      case Mode::mean: return "mean";
      case Mode::max: return "max";
      case Mode::topk: return "topk:" + std::to_string(k);
    }
    return "?";
  }

  static Aggregation parse(const std::string& s) {
    if (s == "mean") return {Mode::mean, 1};
    if (s == "max") return {Mode::max, 1};
    if (s.rfind("topk:", 0) == 0) {
      int k = 0;
      try {
        k = std::stoi(s.substr(5));
      } catch (const std::exception&) {
      }
      if (k < 1) throw DataError("topk aggregation needs a positive K");
      return {Mode::topk, k};
    }
    throw DataError("unknown aggregation '" + s + "' (mean|max|topk:K)");
  }

  double operator()(std::vector<double> h) const {
    if (h.empty()) return 0.0;
    switch (mode) {
      case Mode::mean: {
        double s = 0;
        for (double x : h) s += x;
        return s / static_cast<double>(h.size());
      }
      case Mode::max: return *std::max_element(h.begin(), h.end());
      case Mode::topk: {
        std::sort(h.begin(), h.end(), std::greater<>());
        std::size_t n = std::min<std::size_t>(k, h.size());
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) s += h[j];
        return s / static_cast<double>(n);
      }
    }
    return 0.0;
  }
};

// ---- crystallization ----

struct CrystallizationPoint {
  int t = 0;
  std::optional<double> mean_hall;
  std::optional<double> mean_ground;
  std::optional<double> delta;
  std::size_t n_hall = 0;
  std::size_t n_ground = 0;
};

inline std::vector<double> step_entropy(const TrajectorySet& set, int t) {
  std::vector<double> h;
  for (int i = 0; i < set.config.length; ++i) {
    std::vector<TokenId> col;
    for (auto& tr : set.chains) col.push_back(tr.states[t].tokens[i]);
    h.push_back(column_entropy(col));
  }
  return h;
}

inline std::vector<CrystallizationPoint> entropy_gap(const std::vector<TrajectorySet>& sets,
                                                     const std::vector<std::vector<bool>>& hallucinated) {
  if (sets.size() != hallucinated.size()) throw DataError("entropy_gap: labels cover different queries");
  int T = 0;
  for (auto& s : sets) T = std::max(T, s.config.steps);
  std::vector<CrystallizationPoint> out;
  for (int t = 0; t <= T; ++t) {
    double sh = 0, sg = 0;
    CrystallizationPoint p;
    p.t = t;
    for (std::size_t q = 0; q < sets.size(); ++q) {
      if (t > sets[q].config.steps) continue;
      auto h = step_entropy(sets[q], t);
      for (std::size_t i = 0; i < h.size(); ++i) {
        if (hallucinated[q][i]) {
          sh += h[i];
          p.n_hall++;
        } else {
          sg += h[i];
          p.n_ground++;
        }
      }
    }
    if (p.n_hall) p.mean_hall = sh / static_cast<double>(p.n_hall);
    if (p.n_ground) p.mean_ground = sg / static_cast<double>(p.n_ground);
    if (p.mean_hall && p.mean_ground) p.delta = *p.mean_hall - *p.mean_ground;
    out.push_back(p);
  }
  return out;
}

struct StepwiseLabels {
  int base_chain = 0;
  std::vector<bool> hallucinated;         // final base-chain token != gold
  std::vector<std::vector<bool>> aligned;  // [t][i]: base state at t matches gold
};

inline StepwiseLabels stepwise_alignment_labels(const TrajectorySet& set, const std::vector<TokenId>& gold) {
  if (static_cast<int>(gold.size()) != set.config.length) throw DataError("stepwise labels: gold length differs from L");
  StepwiseLabels out;
  auto prof = cross_chain_entropy(set);
  out.base_chain = select_base_chain(set, prof);
  const auto& tr = set.chains[out.base_chain];
  for (int i = 0; i < set.config.length; ++i) out.hallucinated.push_back(tr.final_tokens[i] != gold[i]);
  for (auto& st : tr.states) {
    std::vector<bool> row;
    for (int i = 0; i < set.config.length; ++i) row.push_back(st.tokens[i] == gold[i]);
    out.aligned.push_back(std::move(row));
  }
  return out;
}

// ---- CBW ----

struct CbwReport {
  std::size_t cbw = 0;
  std::size_t detectable = 0;
  std::size_t total = 0;
  std::optional<double> rate;
};

inline CbwReport cbw_rate(const std::vector<EntropyProfile>& profiles, const std::vector<std::vector<bool>>& hallucinated) {
  if (profiles.size() != hallucinated.size()) throw DataError("cbw_rate: labels cover different queries");
  CbwReport r;
  for (std::size_t q = 0; q < profiles.size(); ++q)
    for (int i = 0; i < profiles[q].length; ++i) {
      if (!hallucinated[q][i]) continue;
      r.total++;
      if (profiles[q].point_mass(i)) r.cbw++;  // exact: one distinct final token
    }
  r.detectable = r.total - r.cbw;
  if (r.total) r.rate = static_cast<double>(r.cbw) / static_cast<double>(r.total);
  return r;
}

// ---- EM / F1 ----

struct EmF1 {
  bool em = false;
  double f1 = 0.0;
};

inline EmF1 em_f1(const std::vector<TokenId>& pred, const std::vector<TokenId>& gold, TokenId pad = kNoToken) {
  std::vector<TokenId> p, g;
  for (auto t : pred)
    if (t != pad) p.push_back(t);
  for (auto t : gold)
    if (t != pad) g.push_back(t);
  EmF1 r;
  r.em = (p == g);
  if (p.empty() && g.empty()) {
    r.f1 = 1.0;
    return r;
  }
  if (p.empty() || g.empty()) return r;
  std::map<TokenId, int> cp, cg;
  for (auto t : p) cp[t]++;
  for (auto t : g) cg[t]++;
  int overlap = 0;
  for (auto& [t, c] : cp)
    if (auto it = cg.find(t); it != cg.end()) overlap += std::min(c, it->second);
  if (overlap == 0) return r;
  double prec = static_cast<double>(overlap) / static_cast<double>(p.size());
  double rec = static_cast<double>(overlap) / static_cast<double>(g.size());
  r.f1 = 2 * prec * rec / (prec + rec);
  return r;
}

// ---- span reduction ----

inline std::optional<double> span_reduction(std::size_t before, std::size_t after) {
  if (before == 0) return std::nullopt;
  return 100.0 * (1.0 - static_cast<double>(after) / static_cast<double>(before));
}

inline std::optional<double> span_reduction(const HallucinationLabels& before, const HallucinationLabels& after) {
  if (before.hallucinated.size() != after.hallucinated.size()) throw DataError("span_reduction: different query sets");
  return span_reduction(before.count(), after.count());
}

// ---- bootstrap ----

struct Interval {
  double low = 0.0;
  double point = 0.0;
  double high = 0.0;
  std::size_t resamples_used = 0;
};

// Percentile bootstrap over sample indices. stat() may return nullopt for a
// degenerate resample (e.g. AUROC with one class); those resamples are skipped.
// Bounds are widened to include the point estimate when needed.
inline Interval bootstrap_ci(std::size_t n, const std::function<std::optional<double>(const std::vector<std::size_t>&)>& stat,
                             int resamples = 1000, double level = 0.95, std::uint64_t seed = 0) {
  if (n < 2) throw DataError("bootstrap_ci: needs at least 2 samples");
  std::vector<std::size_t> all(n);
  for (std::size_t k = 0; k < n; ++k) all[k] = k;
  auto point = stat(all);
  if (!point) throw DataError("bootstrap_ci: statistic undefined on the full sample");
  std::vector<double> vals;
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < resamples; ++b) {
    Rng rng(derive(seed, static_cast<std::uint64_t>(b)));
    for (auto& x : idx) x = static_cast<std::size_t>(rng.bounded(n));
    if (auto v = stat(idx)) vals.push_back(*v);
  }
  Interval ci;
  ci.point = *point;
  ci.resamples_used = vals.size();
  if (vals.empty()) {
    ci.low = ci.high = ci.point;
    return ci;
  }
  std::sort(vals.begin(), vals.end());
  const double tail = (1.0 - level) / 2.0;
  const std::size_t m = vals.size();
  std::size_t lo = static_cast<std::size_t>(std::floor(tail * m));
  std::size_t hi = static_cast<std::size_t>(std::ceil((1.0 - tail) * m - 1e-9));
  lo = std::min(lo, m - 1);
  hi = std::clamp<std::size_t>(hi, 1, m) - 1;
  ci.low = std::min(vals[lo], ci.point);
  ci.high = std::max(vals[hi], ci.point);
  return ci;
}

inline Interval bootstrap_mean_ci(const std::vector<double>& xs, int resamples = 1000, double level = 0.95, std::uint64_t seed = 0) {
  return bootstrap_ci(
      xs.size(),
      [&](const std::vector<std::size_t>& idx) -> std::optional<double> {
        double s = 0;
        for (auto k : idx) s += xs[k];
        return s / static_cast<double>(idx.size());
      },
      resamples, level, seed);
}

// ---- correction precision ----

struct CorrectionPrecision {
  std::size_t improved = 0;
  std::size_t broken = 0;
  std::size_t neutral = 0;    // changed tokens, F1 unchanged
  std::size_t untouched = 0;  // correction changed nothing
  std::optional<double> precision;
};

inline CorrectionPrecision correction_precision(const std::vector<std::vector<TokenId>>& before,
                                                const std::vector<std::vector<TokenId>>& after,
                                                const std::vector<std::vector<TokenId>>& gold, TokenId pad = kNoToken) {
  if (before.size() != after.size() || before.size() != gold.size()) throw DataError("correction_precision: size mismatch");
  CorrectionPrecision r;
  for (std::size_t q = 0; q < before.size(); ++q) {
    if (before[q] == after[q]) {
      r.untouched++;
      continue;
    }
    double f0 = em_f1(before[q], gold[q], pad).f1, f1 = em_f1(after[q], gold[q], pad).f1;
    if (f1 > f0) r.improved++;
    else if (f1 < f0) r.broken++;
    else r.neutral++;
  }
  if (r.improved + r.broken) r.precision = static_cast<double>(r.improved) / static_cast<double>(r.improved + r.broken);
  return r;
}

}  // namespace oscar
