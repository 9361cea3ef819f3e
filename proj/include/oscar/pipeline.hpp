#pragma once

// End-to-end composition (diversify, localize, correct), the comparison
// conditions used in ablations, and corpus-level evaluation reports.

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oscar/correction.hpp"
#include "oscar/engine.hpp"
#include "oscar/localization.hpp"
#include "oscar/metrics.hpp"

namespace oscar {

struct PipelineConfig {
  GenerationConfig gen;
  ScheduleKind schedule = ScheduleKind::hybrid;
  Aggregation agg;
  Execution exec = Execution::batched;
};

// Per-query seed, so queries do not share reveal orders.
inline std::uint64_t query_seed(std::uint64_t run_seed, const std::string& query_id) {
  return derive(run_seed, {0x9E11u, fnv1a(query_id)});
}

struct QueryRun {
  TrajectorySet set;
  EntropyProfile profile;
  UncertainSet uncertain;
  SpanSet spans;
  CorrectionPlan plan;
  CorrectionOutcome outcome;
};

// Stages 2 and 3 on an existing trajectory set; parameters come from set.config.
inline QueryRun localize_and_correct(Denoiser& den, const Query& q, TrajectorySet set, ScheduleKind schedule,
                                     const EvidenceProvider* provider = nullptr, const Vocabulary& vocab = {}) {
  QueryRun r;
  r.set = std::move(set);
  const auto& cfg = r.set.config;
  r.profile = cross_chain_entropy(r.set);
  r.uncertain = localize(r.profile, cfg.alpha);
  r.spans = aggregate_spans(r.uncertain, cfg.span_window, cfg.span_min, cfg.length);
  r.plan = build_plan(r.set, r.profile, r.spans, cfg, provider, schedule, vocab);
  r.outcome = correct(den, q, r.plan);
  return r;
}

inline QueryRun run_query(Denoiser& den, const Query& q, const PipelineConfig& pc, const EvidenceProvider* provider = nullptr,
                          const Vocabulary& vocab = {}, const std::string& run_id = {}) {
  GenerationConfig cfg = pc.gen;
  cfg.seed = query_seed(pc.gen.seed, q.id);
  auto set = run_diversified(den, q, cfg, {}, pc.exec, run_id);
  return localize_and_correct(den, q, std::move(set), pc.schedule, provider, vocab);
}

// ---- comparison conditions ----

// Single chain, confidence-ordered (the model's own sampler).
inline std::vector<TokenId> unguided_decode(Denoiser& den, const Query& q, const GenerationConfig& cfg) {
  return run_chain(den, q, cfg, RevealPolicy::confidence(), 0).final_tokens;
}

// Each localized span keeps its length but moves to a uniformly random offset
// that still overlaps at least one of its flagged positions.
inline std::vector<Span> random_overlap_spans(const SpanSet& spans, const std::vector<int>& flagged, int L, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Span> out;
  for (auto& s : spans.spans) {
    std::vector<int> mine;
    for (int i : flagged)
      if (s.contains(i)) mine.push_back(i);
    std::vector<int> starts;
    for (int x = 0; x + s.size() <= L; ++x) {
      bool hit = false;
      for (int i : mine) hit |= (x <= i && i < x + s.size());
      if (hit) starts.push_back(x);
    }
    if (starts.empty()) starts.push_back(s.a);
    int x = starts[rng.bounded(starts.size())];
    out.push_back({x, x + s.size() - 1, s.origin});
  }
  return merge_spans(std::move(out));
}

// Correction without localization: max(1, floor(ceil(alpha L) / l_min))
// disjoint spans of length l_min at random offsets, gap >= 1 between them.
inline std::vector<Span> random_spans(int L, double alpha, int min_len, std::uint64_t seed) {
  Rng rng(seed);
  const int budget = static_cast<int>(std::ceil(alpha * L - 1e-9));
  const int count = std::max(1, budget / min_len);
  std::vector<bool> used(L, false);
  std::vector<Span> out;
  for (int c = 0; c < count; ++c) {
    std::vector<int> starts;
    for (int a = 0; a + min_len <= L; ++a) {
      bool ok = true;
      for (int j = std::max(0, a - 1); j < std::min(L, a + min_len + 1); ++j) ok &= !used[j];
      if (ok) starts.push_back(a);
    }
    if (starts.empty()) break;
    int a = starts[rng.bounded(starts.size())];
    for (int j = a; j < a + min_len; ++j) used[j] = true;
    out.push_back({a, a + min_len - 1, SpanOrigin::raw});
  }
  std::sort(out.begin(), out.end(), [](auto& x, auto& y) { return x.a < y.a; });
  return out;
}

inline std::vector<TokenId> correct_spans(Denoiser& den, const Query& q, const std::vector<TokenId>& base,
                                          std::vector<Span> spans, int refine_steps, ScheduleKind schedule, std::uint64_t seed) {
  CorrectionPlan p;
  p.base = base;
  p.spans = std::move(spans);
  p.refine_steps = refine_steps;
  p.schedule = make_schedule(schedule, refine_steps);
  p.evidence.assign(p.spans.size(), {});
  p.seed = seed;
  return correct(den, q, p).tokens;
}

// ---- evaluation ----

struct EvalItem {
  std::string query_id;
  TrajectorySet set;
  EntropyProfile profile;
  std::vector<TokenId> before;   // base chain
  std::vector<TokenId> after;    // corrected
  std::vector<Span> spans;
  std::vector<bool> hallucinated;  // position labels
  std::vector<TokenId> gold;       // empty when unknown
};

inline EvalItem eval_item(const QueryRun& r, std::vector<bool> labels, std::vector<TokenId> gold) {
  return {r.set.query_id, r.set, r.profile, r.plan.base, r.outcome.tokens, r.plan.spans, std::move(labels), std::move(gold)};
}

struct EvalReport {
  std::size_t queries = 0;
  std::string aggregation = "mean";
  std::string labels = "synthetic_oracle";
  std::optional<double> auroc;
  std::optional<Interval> auroc_ci;
  std::string auroc_note;
  std::optional<double> token_auroc;  // position entropy vs position label, pooled
  std::vector<std::pair<int, std::optional<double>>> cdh;
  std::optional<double> f1_before, f1_after, delta_f1, em_before, em_after, delta_em;
  std::optional<Interval> delta_f1_ci;
  CorrectionPrecision precision;
  CbwReport cbw;
  std::optional<double> span_reduction_pct;
  double remask_ratio = 0.0;
  std::vector<CrystallizationPoint> crystallization;

  std::optional<double> cdh_at(int k) const {
    for (auto& [kk, v] : cdh)
      if (kk == k) return v;
    return std::nullopt;
  }
};

inline EvalReport evaluate(const std::vector<EvalItem>& items, const Aggregation& agg, LabelProvenance prov,
                           std::uint64_t seed = 0, TokenId pad = kNoToken, int resamples = 1000) {
  EvalReport rep;
  rep.queries = items.size();
  rep.aggregation = agg.name();
  rep.labels = provenance_name(prov);
  if (items.empty()) return rep;

  std::vector<std::vector<double>> ent;
  std::vector<std::vector<bool>> hall;
  std::vector<EntropyProfile> profs;
  std::vector<TrajectorySet> sets;
  std::size_t covered = 0, total = 0;
  for (auto& it : items) {
    ent.push_back(it.profile.entropy);
    hall.push_back(it.hallucinated);
    profs.push_back(it.profile);
    sets.push_back(it.set);
    for (auto& s : it.spans) covered += s.size();
    total += it.before.size();
  }
  rep.cdh = cdh_curve(ent, hall);
  rep.cbw = cbw_rate(profs, hall);
  rep.remask_ratio = total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
  rep.crystallization = entropy_gap(sets, hall);

  {
    std::vector<double> hs;
    std::vector<bool> ls;
    for (std::size_t q = 0; q < ent.size(); ++q)
      for (std::size_t i = 0; i < ent[q].size(); ++i) {
        hs.push_back(ent[q][i]);
        ls.push_back(hall[q][i]);
      }
    try {
      rep.token_auroc = auroc(hs, ls);
    } catch (const DataError&) {
    }
  }

  const bool have_gold = std::all_of(items.begin(), items.end(), [](auto& it) { return !it.gold.empty(); });

  // sample-level detection: score = aggregated entropy; label = output is wrong
  std::vector<double> scores;
  std::vector<bool> wrong;
  for (auto& it : items) {
    scores.push_back(agg(it.profile.entropy));
    if (have_gold) wrong.push_back(it.before != it.gold);
    else wrong.push_back(std::find(it.hallucinated.begin(), it.hallucinated.end(), true) != it.hallucinated.end());
  }
  try {
    rep.auroc = auroc(scores, wrong);
    rep.auroc_ci = bootstrap_ci(
        items.size(),
        [&](const std::vector<std::size_t>& idx) -> std::optional<double> {
          std::vector<double> s;
          std::vector<bool> l;
          for (auto k : idx) {
            s.push_back(scores[k]);
            l.push_back(wrong[k]);
          }
          try {
            return auroc(s, l);
          } catch (const DataError&) {
            return std::nullopt;
          }
        },
        resamples, 0.95, derive(seed, {0xA0u}));
  } catch (const DataError& e) {
    rep.auroc_note = e.what();
  }

  if (have_gold) {
    std::vector<double> d;
    double fb = 0, fa = 0, eb = 0, ea = 0;
    std::size_t wrong_before = 0, wrong_after = 0;
    std::vector<std::vector<TokenId>> B, A, G;
    for (auto& it : items) {
      auto b = em_f1(it.before, it.gold, pad), a = em_f1(it.after, it.gold, pad);
      fb += b.f1;
      fa += a.f1;
      eb += b.em;
      ea += a.em;
      d.push_back(a.f1 - b.f1);
      for (std::size_t i = 0; i < it.gold.size(); ++i) {
        wrong_before += it.before[i] != it.gold[i];
        wrong_after += it.after[i] != it.gold[i];
      }
      B.push_back(it.before);
      A.push_back(it.after);
      G.push_back(it.gold);
    }
    const double n = static_cast<double>(items.size());
    rep.f1_before = fb / n;
    rep.f1_after = fa / n;
    rep.delta_f1 = (fa - fb) / n;
    rep.em_before = eb / n;
    rep.em_after = ea / n;
    rep.delta_em = (ea - eb) / n;
    if (items.size() >= 2) rep.delta_f1_ci = bootstrap_mean_ci(d, resamples, 0.95, derive(seed, {0xF1u}));
    rep.precision = correction_precision(B, A, G, pad);
    rep.span_reduction_pct = span_reduction(wrong_before, wrong_after);
  }
  return rep;
}

// ---- report output ----

namespace detail {
inline std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
inline std::string num(const std::optional<double>& x) { return x ? num(*x) : std::string{}; }
inline nlohmann::ordered_json jnum(const std::optional<double>& x) {
  return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr);
}
inline nlohmann::ordered_json jci(const std::optional<Interval>& ci) {
  if (!ci) return nullptr;
  return {{"low", ci->low}, {"point", ci->point}, {"high", ci->high}, {"resamples_used", ci->resamples_used}};
}
}  // namespace detail

inline std::string report_to_json(const EvalReport& r) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["queries"] = r.queries;
  j["labels"] = r.labels;
  j["aggregation"] = r.aggregation;
  j["auroc"] = detail::jnum(r.auroc);
  j["auroc_ci"] = detail::jci(r.auroc_ci);
  if (!r.auroc_note.empty()) j["auroc_note"] = r.auroc_note;
  j["token_auroc"] = detail::jnum(r.token_auroc);
  oj curve = oj::array();
  for (auto& [k, v] : r.cdh) curve.push_back({{"k", k}, {"cdh", detail::jnum(v)}});
  j["cdh"] = curve;
  j["f1_before"] = detail::jnum(r.f1_before);
  j["f1_after"] = detail::jnum(r.f1_after);
  j["delta_f1"] = detail::jnum(r.delta_f1);
  j["delta_f1_ci"] = detail::jci(r.delta_f1_ci);
  j["em_before"] = detail::jnum(r.em_before);
  j["em_after"] = detail::jnum(r.em_after);
  j["delta_em"] = detail::jnum(r.delta_em);
  j["correction"] = {{"improved", r.precision.improved}, {"broken", r.precision.broken}, {"neutral", r.precision.neutral},
                     {"untouched", r.precision.untouched}, {"precision", detail::jnum(r.precision.precision)}};
  j["cbw"] = {{"cbw", r.cbw.cbw}, {"detectable", r.cbw.detectable}, {"total", r.cbw.total}, {"rate", detail::jnum(r.cbw.rate)}};
  j["span_reduction_pct"] = detail::jnum(r.span_reduction_pct);
  j["remask_ratio"] = r.remask_ratio;
  oj gap = oj::array();
  for (auto& p : r.crystallization)
    gap.push_back({{"t", p.t}, {"mean_hall", detail::jnum(p.mean_hall)}, {"mean_ground", detail::jnum(p.mean_ground)},
                   {"delta", detail::jnum(p.delta)}, {"n_hall", p.n_hall}, {"n_ground", p.n_ground}});
  j["entropy_gap"] = gap;
  return j.dump(2) + "\n";
}

// metric,value
inline void write_report_csv(std::ostream& os, const EvalReport& r) {
  using detail::num;
  os << "metric,value\n";
  os << "queries," << r.queries << '\n';
  os << "labels," << r.labels << '\n';
  os << "aggregation," << r.aggregation << '\n';
  os << "auroc," << num(r.auroc) << '\n';
  if (r.auroc_ci) os << "auroc_ci_low," << num(r.auroc_ci->low) << "\nauroc_ci_high," << num(r.auroc_ci->high) << '\n';
  os << "token_auroc," << num(r.token_auroc) << '\n';
  for (auto& [k, v] : r.cdh) os << "cdh_" << k << ',' << num(v) << '\n';
  os << "f1_before," << num(r.f1_before) << '\n';
  os << "f1_after," << num(r.f1_after) << '\n';
  os << "delta_f1," << num(r.delta_f1) << '\n';
  if (r.delta_f1_ci) os << "delta_f1_ci_low," << num(r.delta_f1_ci->low) << "\ndelta_f1_ci_high," << num(r.delta_f1_ci->high) << '\n';
  os << "em_before," << num(r.em_before) << '\n';
  os << "em_after," << num(r.em_after) << '\n';
  os << "delta_em," << num(r.delta_em) << '\n';
  os << "corr_improved," << r.precision.improved << '\n';
  os << "corr_broken," << r.precision.broken << '\n';
  os << "corr_neutral," << r.precision.neutral << '\n';
  os << "corr_untouched," << r.precision.untouched << '\n';
  os << "corr_precision," << num(r.precision.precision) << '\n';
  os << "cbw_count," << r.cbw.cbw << '\n';
  os << "cbw_detectable," << r.cbw.detectable << '\n';
  os << "cbw_rate," << num(r.cbw.rate) << '\n';
  os << "span_reduction_pct," << num(r.span_reduction_pct) << '\n';
  os << "remask_ratio," << num(r.remask_ratio) << '\n';
}

inline void write_cdh_csv(std::ostream& os, const EvalReport& r) {
  os << "k,cdh,random_baseline\n";
  for (auto& [k, v] : r.cdh) os << k << ',' << detail::num(v) << ',' << detail::num(k / 100.0) << '\n';
}

inline void write_gap_csv(std::ostream& os, const EvalReport& r) {
  os << "t,mean_hall,mean_ground,delta,n_hall,n_ground\n";
  for (auto& p : r.crystallization)
    os << p.t << ',' << detail::num(p.mean_hall) << ',' << detail::num(p.mean_ground) << ',' << detail::num(p.delta) << ','
       << p.n_hall << ',' << p.n_ground << '\n';
}

}  // namespace oscar
