#pragma once

// Targeted remasking: each span is re-masked in the base chain and
// re-denoised for T_r steps with every other position frozen.

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oscar/engine.hpp"
#include "oscar/localization.hpp"
#include "oscar/trajectory_io.hpp"

namespace oscar {

class EvidenceProvider {
 public:
  virtual ~EvidenceProvider() = default;
  // at most one passage; nullopt or empty = nothing
  virtual std::optional<std::string> fetch(const std::string& span_text) const = 0;
};

namespace detail {
inline std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> w;
  std::string x;
  while (is >> x) w.push_back(x);
  return w;
}
}  // namespace detail

// Whole-word overlap lookup standing in for a dense retriever.
class KeywordProvider : public EvidenceProvider {
 public:
  static constexpr std::size_t kMaxPassageTokens = 256;

  explicit KeywordProvider(std::vector<std::pair<std::string, std::string>> corpus) {
    std::sort(corpus.begin(), corpus.end());
    for (std::size_t k = 1; k < corpus.size(); ++k)
      if (corpus[k].first == corpus[k - 1].first) throw DataError("evidence corpus has duplicate key '" + corpus[k].first + "'");
    for (auto& [key, passage] : corpus) {
      auto w = detail::words(key);
      entries_.push_back({key, std::set<std::string>(w.begin(), w.end()), truncate(passage)});
    }
  }

  std::optional<std::string> fetch(const std::string& span_text) const override {
    auto w = detail::words(span_text);
    std::set<std::string> query(w.begin(), w.end());
    const Entry* best = nullptr;
    std::size_t best_n = 0;
    for (auto& e : entries_) {  // sorted by key, strict > keeps the lexicographically first
      std::size_t n = 0;
      for (auto& x : e.words) n += query.count(x);
      if (n > best_n) {
        best_n = n;
        best = &e;
      }
    }
    if (!best) return std::nullopt;
    return best->passage;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string key;
    std::set<std::string> words;
    std::string passage;
  };

  static std::string truncate(const std::string& p) {
    auto w = detail::words(p);
    if (w.size() <= kMaxPassageTokens) return p;
    std::string out;
    for (std::size_t k = 0; k < kMaxPassageTokens; ++k) out += (k ? " " : "") + w[k];
    return out;
  }

  std::vector<Entry> entries_;
};

// {"version":1, "passages":[{"key":..., "passage":...}, ...]}
inline KeywordProvider keyword_provider_from_json(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  try {
    auto j = nlohmann::json::parse(text);
    if (j.value("version", 0) != 1) throw DataError("evidence corpus: unsupported version");
    for (auto& p : j.at("passages")) kv.emplace_back(p.at("key").get<std::string>(), p.at("passage").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("evidence corpus: ") + e.what());
  }
  return KeywordProvider(std::move(kv));
}

inline KeywordProvider load_keyword_provider(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open evidence corpus '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return keyword_provider_from_json(ss.str());
}

enum class ScheduleKind { learned, random, hybrid, entropy };

inline const char* schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::learned: return "learned";
    case ScheduleKind::random: return "random";
    case ScheduleKind::hybrid: return "hybrid";
    case ScheduleKind::entropy: return "entropy";
  }
  return "?";
}

inline ScheduleKind parse_schedule(const std::string& s) {
  if (s == "learned") return ScheduleKind::learned;
  if (s == "random") return ScheduleKind::random;
  if (s == "hybrid") return ScheduleKind::hybrid;
  if (s == "entropy") return ScheduleKind::entropy;
  throw DataError("unknown schedule '" + s + "' (learned|random|hybrid|entropy)");
}

inline std::vector<PolicyKind> make_schedule(ScheduleKind k, int steps) {
  switch (k) {
    case ScheduleKind::learned: return std::vector<PolicyKind>(steps, PolicyKind::confidence);
    case ScheduleKind::random: return std::vector<PolicyKind>(steps, PolicyKind::random);
    case ScheduleKind::entropy: return std::vector<PolicyKind>(steps, PolicyKind::entropy);
    case ScheduleKind::hybrid: {
      std::vector<PolicyKind> s(steps, PolicyKind::random);
      s[0] = PolicyKind::confidence;
      return s;
    }
  }
  return {};
}

struct CorrectionPlan {
  int base_chain = 0;
  std::vector<TokenId> base;
  std::vector<Span> spans;
  int refine_steps = 8;
  std::vector<PolicyKind> schedule;
  std::vector<std::string> evidence;  // per span, empty = absent
  std::uint64_t seed = 0;

  void check() const {
    if (refine_steps < 1) throw DataError("plan: refine_steps must be positive");
    if (static_cast<int>(schedule.size()) != refine_steps) throw DataError("plan: schedule length differs from refine_steps");
    if (evidence.size() != spans.size()) throw DataError("plan: evidence count differs from span count");
    const int L = static_cast<int>(base.size());
    for (std::size_t k = 0; k < spans.size(); ++k) {
      const auto& s = spans[k];
      if (s.a < 0 || s.b >= L || s.a > s.b) throw DataError("plan: span outside [0, L) or empty");
      if (k > 0 && s.a <= spans[k - 1].b) throw DataError("plan: spans overlap or are unsorted");
    }
  }
};

inline std::string span_text(const std::vector<TokenId>& tokens, const Span& s, const Vocabulary& vocab) {
  std::string out;
  for (int i = s.a; i <= s.b; ++i) out += (i > s.a ? " " : "") + vocab.name(tokens[i]);
  return out;
}

inline CorrectionPlan build_plan(const TrajectorySet& set, const EntropyProfile& prof, const SpanSet& spans,
                                 const GenerationConfig& cfg, const EvidenceProvider* provider = nullptr,
                                 ScheduleKind schedule = ScheduleKind::hybrid, const Vocabulary& vocab = {}) {
  if (prof.length != set.config.length) throw DataError("build_plan: profile length differs from trajectories");
  CorrectionPlan p;
  p.base_chain = select_base_chain(set, prof);
  p.base = set.chains[p.base_chain].final_tokens;
  p.spans = spans.spans;
  p.refine_steps = cfg.refine_steps;
  p.schedule = make_schedule(schedule, cfg.refine_steps);
  p.seed = derive(cfg.seed, {0xC022ECu});
  for (auto& s : p.spans) {
    std::string ev;
    if (provider) {
      if (auto got = provider->fetch(span_text(p.base, s, vocab))) ev = *got;
    }
    p.evidence.push_back(ev);
  }
  p.check();
  return p;
}

struct SpanCorrection {
  Span span;
  std::vector<TokenId> before;
  std::vector<TokenId> after;
  std::vector<RevealEvent> log;  // t = correction step
  int calls = 0;
};

struct CorrectionOutcome {
  std::vector<TokenId> tokens;
  std::vector<SpanCorrection> spans;
  std::vector<int> changed;
  int spans_touched = 0;
  int calls = 0;

  std::vector<CorrRecord> records() const {
    std::vector<CorrRecord> out;
    for (auto& s : spans)
      for (auto& ev : s.log) out.push_back({s.span.a, s.span.b, ev.t, ev.i, ev.tok, ev.conf});
    return out;
  }
};

// Spans are independent: each sees y* outside itself, never another span's
// correction. RANDOM steps of span k are seeded by (plan seed, k, step).
inline CorrectionOutcome correct(Denoiser& den, const Query& q, const CorrectionPlan& plan) {
  plan.check();
  CorrectionOutcome out;
  out.tokens = plan.base;
  for (std::size_t k = 0; k < plan.spans.size(); ++k) {
    const Span& s = plan.spans[k];
    std::vector<TokenId> init = plan.base;
    for (int i = s.a; i <= s.b; ++i) init[i] = kMasked;
    RevealPolicy pol{plan.schedule, derive(plan.seed, static_cast<std::uint64_t>(k)), {}};
    RefineResult r;
    try {
      r = refine(den, q, plan.evidence[k], std::move(init), plan.refine_steps, pol);
    } catch (const DenoiserError& e) {
      throw DenoiserError("span [" + std::to_string(s.a) + "," + std::to_string(s.b) + "]: " + e.what());
    }
    SpanCorrection sc;
    sc.span = s;
    sc.before.assign(plan.base.begin() + s.a, plan.base.begin() + s.b + 1);
    sc.after.assign(r.tokens.begin() + s.a, r.tokens.begin() + s.b + 1);
    sc.log = std::move(r.events);
    sc.calls = r.calls;
    bool touched = false;
    for (int i = s.a; i <= s.b; ++i) {
      out.tokens[i] = r.tokens[i];
      if (r.tokens[i] != plan.base[i]) {
        out.changed.push_back(i);
        touched = true;
      }
    }
    out.spans_touched += touched;
    out.calls += sc.calls;
    out.spans.push_back(std::move(sc));
  }
  return out;
}

inline double remask_ratio(const std::vector<Span>& spans, int L) {
  int n = 0;
  for (auto& s : spans) n += s.size();
  return static_cast<double>(n) / static_cast<double>(L);
}

inline OutcomeRecord outcome_record(const CorrectionPlan& plan, const CorrectionOutcome& out) {
  OutcomeRecord r;
  r.base_chain = plan.base_chain;
  r.tokens = out.tokens;
  for (auto& s : plan.spans) r.spans.emplace_back(s.a, s.b);
  r.changed = out.changed;
  r.remask_ratio = remask_ratio(plan.spans, static_cast<int>(plan.base.size()));
  return r;
}

}  // namespace oscar
