#pragma once

// Toy masked-diffusion world with explicit attractor couplings and gold
// labels. Every position has a small base distribution; committed anchors
// shift mass on their targets. The order in which coupled positions commit
// decides the outcome, which is the mechanism cross-chain entropy detects.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oscar/core.hpp"
#include "oscar/denoiser.hpp"
#include "oscar/engine.hpp"
#include "oscar/rng.hpp"

namespace oscar {

enum class PositionClass { stable, uncertain, cbw };

enum class CouplingKind {
  attract,  // anchor on its distractor pulls the target toward its distractor
  support,  // anchor on its gold pulls the target toward its gold
  agree,    // both of the above
};

inline const char* class_code(PositionClass c) {
  switch (c) {
    case PositionClass::stable: return "S";
    case PositionClass::uncertain: return "U";
    case PositionClass::cbw: return "C";
  }
  return "?";
}

inline const char* coupling_name(CouplingKind k) {
  switch (k) {
    case CouplingKind::attract: return "attract";
    case CouplingKind::support: return "support";
    case CouplingKind::agree: return "agree";
  }
  return "?";
}

struct Coupling {
  int anchor = 0;
  int target = 0;
  double strength = 0.0;  // lambda
  CouplingKind kind = CouplingKind::attract;
  bool operator==(const Coupling&) const = default;
};

struct KnowledgeEntry {
  std::string query_id;
  std::uint64_t seed = 0;  // keys the background logits
  std::vector<TokenId> gold;
  std::vector<TokenId> distractor;  // for CBW positions: the confident wrong token
  std::vector<Distribution> base;   // ascending token id
  std::vector<PositionClass> cls;
  std::vector<Coupling> couplings;
  std::vector<bool> prone;  // hallucination-prone by construction

  int length() const { return static_cast<int>(gold.size()); }
  bool operator==(const KnowledgeEntry&) const = default;
};

struct CorpusSpec {
  int size = 200;
  int length = 32;
  std::int64_t vocab_size = 512;
  double cbw_fraction = 0.10;
  double attractor_fraction = 1.0;  // share of queries that carry attractor blocks
  int blocks = 1;
  // block layout: [main core][gap][support][weak core], mirrored at random
  int main_core = 5;
  int main_seeds = 4;
  int gap = 3;
  int weak_core = 5;
  int weak_seeds = 1;
  double lambda_lo = 0.6, lambda_hi = 0.8;    // agree couplings inside a core
  double support_lo = 0.3, support_hi = 0.5;  // support position -> main seeds
  double background_mass = 1e-6;
  int top_k = 8;
  std::uint64_t seed = 7;

  int block_width() const { return main_core + gap + 1 + weak_core; }
  bool operator==(const CorpusSpec&) const = default;
};

struct SyntheticCorpus {
  int version = 1;
  Vocabulary vocab;
  int length = 0;
  double background_mass = 1e-6;
  int top_k = 8;
  CorpusSpec spec;
  std::vector<KnowledgeEntry> entries;

  // Rebuild after changing entries; find() never mutates, so lookups are
  // safe from several threads.
  void reindex() {
    index_.clear();
    for (std::size_t k = 0; k < entries.size(); ++k) index_[entries[k].query_id] = k;
  }

  const KnowledgeEntry& find(const std::string& query_id) const {
    if (index_.size() == entries.size()) {
      auto it = index_.find(query_id);
      if (it != index_.end()) return entries[it->second];
    } else {
      for (auto& e : entries)
        if (e.query_id == query_id) return e;
    }
    throw DenoiserError("query '" + query_id + "' not in synthetic corpus");
  }

  std::vector<Query> queries() const {
    std::vector<Query> q;
    for (auto& e : entries) q.push_back({e.query_id, {}});
    return q;
  }

 private:
  std::map<std::string, std::size_t> index_;
};

// "pos=i gold=tok" pairs, whitespace separated.
inline std::map<int, TokenId> parse_evidence(const std::string& text) {
  std::map<int, TokenId> out;
  std::istringstream is(text);
  std::string w;
  int pos = -1;
  while (is >> w) {
    try {
      if (w.rfind("pos=", 0) == 0) {
        pos = std::stoi(w.substr(4));
      } else if (w.rfind("gold=", 0) == 0 && pos >= 0) {
        out[pos] = static_cast<TokenId>(std::stol(w.substr(5)));
        pos = -1;
      }
    } catch (const std::exception&) {
      pos = -1;
    }
  }
  return out;
}

namespace detail {
inline std::size_t find_tok(Distribution& d, TokenId t) {
  for (std::size_t k = 0; k < d.size(); ++k)
    if (d[k].tok == t) return k;
  d.push_back({t, 0.0});
  std::sort(d.begin(), d.end(), [](auto& a, auto& b) { return a.tok < b.tok; });
  for (std::size_t k = 0; k < d.size(); ++k)
    if (d[k].tok == t) return k;
  return 0;
}
}  // namespace detail

// Base distribution at position i after couplings and evidence.
inline Distribution world_distribution(const KnowledgeEntry& e, int i, const std::vector<TokenId>& tokens,
                                       const std::map<int, TokenId>& evidence) {
  Distribution d = e.base[i];
  if (auto it = evidence.find(i); it != evidence.end()) {
    // evidence overrides couplings: named token gets 0.97, the rest share 0.03
    std::size_t k = detail::find_tok(d, it->second);
    double rest = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j)
      if (j != k) rest += d[j].p;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (j == k) d[j].p = rest > 0.0 ? 0.97 : 1.0;
      else d[j].p = d[j].p / rest * 0.03;
    }
    return d;
  }
  double delta = 0.0;  // > 0: toward distractor
  for (auto& c : e.couplings) {
    if (c.target != i) continue;
    TokenId a = tokens[c.anchor];
    if (a == kMasked) continue;
    if (a == e.distractor[c.anchor] && c.kind != CouplingKind::support) delta += c.strength;
    if (a == e.gold[c.anchor] && c.kind != CouplingKind::attract) delta -= c.strength;
  }
  if (delta == 0.0) return d;
  std::size_t g = detail::find_tok(d, e.gold[i]);
  std::size_t x = detail::find_tok(d, e.distractor[i]);
  if (delta > 0.0) {
    double m = std::min(delta, d[g].p);
    d[g].p -= m;
    d[x].p += m;
  } else {
    double m = std::min(-delta, d[x].p);
    d[x].p -= m;
    d[g].p += m;
  }
  return d;
}

// The synthetic model. Each forward pass evaluates a dense head over the full
// vocabulary at every position (the context-free background), then applies
// each sequence's sparse context adjustments and top-k truncation. The dense
// part is shared across a batch of sequences for the same query, the way
// weight streaming is shared in a batched forward of a real model.
class SyntheticDenoiser : public Denoiser {
 public:
  explicit SyntheticDenoiser(const SyntheticCorpus& c) : c_(c) {}

  DenoiseResponse denoise(const DenoiseRequest& req) override {
    const auto& e = c_.find(req.query);
    auto dense = forward_dense(e);
    return finish(e, dense, req);
  }

  std::vector<DenoiseResponse> denoise_batch(std::span<const DenoiseRequest> reqs) override {
    std::vector<DenoiseResponse> out(reqs.size());
    std::map<std::string, Dense> cache;
    for (std::size_t k = 0; k < reqs.size(); ++k) {
      const auto& e = c_.find(reqs[k].query);
      auto it = cache.find(e.query_id);
      if (it == cache.end()) it = cache.emplace(e.query_id, forward_dense(e)).first;
      out[k] = finish(e, it->second, reqs[k]);
    }
    return out;
  }

  std::int64_t vocab_size() const override { return c_.vocab.size; }
  TokenId mask_id() const override { return c_.vocab.mask_id; }
  std::string model_tag() const override { return "synthetic-v" + std::to_string(c_.version); }

 private:
  struct Dense {
    std::vector<double> total;                  // background weight sum per position
    std::vector<std::vector<TokenProb>> top;    // best background tokens per position (weight, desc)
  };

  static double noise(std::uint64_t seed, std::uint64_t cell) {
    return static_cast<double>(splitmix64(seed ^ splitmix64(cell)) >> 11) * 0x1.0p-53;
  }

  Dense forward_dense(const KnowledgeEntry& e) const {
    const int L = e.length();
    const std::int64_t V = c_.vocab.size;
    const std::size_t k = static_cast<std::size_t>(std::max(c_.top_k, 1));
    Dense d;
    d.total.assign(L, 0.0);
    d.top.assign(L, {});
    if (c_.background_mass <= 0.0) return d;
    for (int i = 0; i < L; ++i) {
      auto& top = d.top[i];
      double sum = 0.0;
      const auto& support = e.base[i];
      for (std::int64_t v = 0; v < V; ++v) {
        double w = std::exp(noise(e.seed, static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(V) + v));
        if (v == c_.vocab.mask_id) continue;
        bool in_support = false;
        for (auto& tp : support) in_support |= (tp.tok == v);
        if (in_support) continue;
        sum += w;
        if (top.size() < k || w > top.back().p) {
          TokenProb tp{static_cast<TokenId>(v), w};
          auto pos = std::upper_bound(top.begin(), top.end(), tp, [](auto& a, auto& b) { return a.p > b.p; });
          top.insert(pos, tp);
          if (top.size() > k) top.pop_back();
        }
      }
      d.total[i] = sum;
    }
    return d;
  }

  DenoiseResponse finish(const KnowledgeEntry& e, const Dense& dense, const DenoiseRequest& req) const {
    if (static_cast<int>(req.tokens.size()) != e.length())
      throw DenoiserError("state length " + std::to_string(req.tokens.size()) + " differs from query length " + std::to_string(e.length()));
    const auto ev = parse_evidence(req.evidence);
    const double beta = c_.background_mass;
    const std::size_t k = static_cast<std::size_t>(std::max(c_.top_k, 1));
    DenoiseResponse out;
    for (int i = 0; i < e.length(); ++i) {
      if (req.tokens[i] != kMasked) continue;
      Distribution q = world_distribution(e, i, req.tokens, ev);
      Distribution cand;
      for (auto& tp : q)
        if (tp.p > 0.0) cand.push_back({tp.tok, (beta > 0.0 ? (1.0 - beta) : 1.0) * tp.p});
      if (beta > 0.0) {
        for (auto& tp : dense.top[i]) {
          bool dup = false;
          for (auto& s : q) dup |= (s.tok == tp.tok);
          if (!dup) cand.push_back({tp.tok, beta * tp.p / dense.total[i]});
        }
      }
      std::sort(cand.begin(), cand.end(), [](auto& a, auto& b) { return a.p != b.p ? a.p > b.p : a.tok < b.tok; });
      if (cand.size() > k) cand.resize(k);
      double z = 0.0;
      for (auto& tp : cand) z += tp.p;
      for (auto& tp : cand) tp.p /= z;
      out.push_back({i, std::move(cand)});
    }
    return out;
  }

  const SyntheticCorpus& c_;
};

// ---- corpus generation ----

inline SyntheticCorpus make_corpus(const CorpusSpec& s) {
  if (s.size < 1) throw DataError("corpus size must be positive");
  if (s.length < 1 || s.length > 64) throw DataError("corpus length must be in [1, 64]");
  if (s.vocab_size < 2 * s.length + 4) throw DataError("vocabulary too small for distinct gold and distractor tokens");
  if (s.cbw_fraction < 0.0 || s.cbw_fraction > 1.0) throw DataError("cbw_fraction outside [0,1]");
  if (s.blocks > 0 && s.attractor_fraction > 0.0) {
    if (s.main_core < 2 || s.main_seeds < 1 || s.main_seeds > s.main_core)
      throw DataError("infeasible mix: main core needs >= 2 positions and 1..core seeds");
    if (s.weak_core != 0 && (s.weak_core < 2 || s.weak_seeds < 1 || s.weak_seeds > s.weak_core))
      throw DataError("infeasible mix: weak core needs >= 2 positions and 1..core seeds");
    if (s.gap < 0) throw DataError("gap must be non-negative");
  }

  SyntheticCorpus c;
  c.vocab.size = s.vocab_size;
  c.vocab.mask_id = 0;
  c.vocab.pad_id = 1;
  c.length = s.length;
  c.background_mass = s.background_mass;
  c.top_k = s.top_k;
  c.spec = s;
  const int L = s.length;
  const int n_cbw = static_cast<int>(std::lround(s.cbw_fraction * L));

  for (int q = 0; q < s.size; ++q) {
    KnowledgeEntry e;
    e.query_id = "q" + std::to_string(q);
    e.seed = derive(s.seed, {0x51u, static_cast<std::uint64_t>(q)});
    Rng r(e.seed);
    auto draw = [&](const std::set<TokenId>& avoid) {
      for (;;) {
        TokenId t = static_cast<TokenId>(2 + r.bounded(static_cast<std::uint64_t>(s.vocab_size - 2)));
        if (!avoid.count(t)) return t;
      }
    };
    std::set<TokenId> used_tokens;
    for (int i = 0; i < L; ++i) {
      e.gold.push_back(draw(used_tokens));
      used_tokens.insert(e.gold.back());
    }
    for (int i = 0; i < L; ++i) {
      e.distractor.push_back(draw(used_tokens));
      used_tokens.insert(e.distractor.back());
    }
    e.cls.assign(L, PositionClass::stable);
    e.prone.assign(L, false);
    std::vector<double> pg(L, 0.97), pd(L, 0.03);

    std::vector<bool> occupied(L, false);
    auto place = [&](int width) {
      std::vector<int> starts;
      for (int a = 0; a + width <= L; ++a) {
        bool ok = true;
        for (int j = std::max(0, a - 1); j < std::min(L, a + width + 1); ++j) ok &= !occupied[j];
        if (ok) starts.push_back(a);
      }
      if (starts.empty()) throw DataError("infeasible mix: attractor blocks do not fit in length " + std::to_string(L));
      int a = starts[r.bounded(starts.size())];
      for (int j = a; j < a + width; ++j) occupied[j] = true;
      return a;
    };
    auto setup_core = [&](std::vector<int> core, int seeds) {
      auto chosen = r.sample(core, seeds);
      std::set<int> seed_set(chosen.begin(), chosen.end());
      for (int j : core) {
        e.cls[j] = PositionClass::uncertain;
        e.prone[j] = true;
        if (seed_set.count(j)) {
          pd[j] = r.uniform(0.56, 0.585);  // misled: distractor is the context-free argmax
          pg[j] = 0.99 - pd[j];
        } else {
          pg[j] = r.uniform(0.52, 0.55);
          pd[j] = 0.99 - pg[j];
        }
      }
      for (int a : core)
        for (int b : core)
          if (a != b) e.couplings.push_back({a, b, r.uniform(s.lambda_lo, s.lambda_hi), CouplingKind::agree});
      std::vector<int> out(chosen.begin(), chosen.end());
      std::sort(out.begin(), out.end());
      return out;
    };

    const bool with_blocks = s.blocks > 0 && r.uniform() < s.attractor_fraction;
    for (int b = 0; with_blocks && b < s.blocks; ++b) {
      const int width = s.block_width();
      const int a = place(width);
      std::vector<int> main, weak;
      for (int j = 0; j < s.main_core; ++j) main.push_back(a + j);
      int sup = a + s.main_core + s.gap;
      for (int j = 0; j < s.weak_core; ++j) weak.push_back(sup + 1 + j);
      if (r.uniform() < 0.5) {
        auto mirror = [&](int j) { return 2 * a + width - 1 - j; };
        for (auto& j : main) j = mirror(j);
        for (auto& j : weak) j = mirror(j);
        sup = mirror(sup);
        std::sort(main.begin(), main.end());
        std::sort(weak.begin(), weak.end());
      }
      auto seeds = setup_core(main, s.main_seeds);
      e.cls[sup] = PositionClass::uncertain;
      pg[sup] = r.uniform(0.52, 0.55);
      pd[sup] = 0.99 - pg[sup];
      for (int sd : seeds) e.couplings.push_back({sup, sd, r.uniform(s.support_lo, s.support_hi), CouplingKind::support});
      if (!weak.empty()) setup_core(weak, s.weak_seeds);
    }

    std::vector<int> free_pos;
    for (int i = 0; i < L; ++i)
      if (!occupied[i]) free_pos.push_back(i);
    if (static_cast<int>(free_pos.size()) < n_cbw) throw DataError("infeasible mix: no room for CBW positions");
    for (int i : r.sample(free_pos, n_cbw)) {
      e.cls[i] = PositionClass::cbw;
      e.prone[i] = true;
      pg[i] = 0.03;
      pd[i] = 0.97;
    }

    for (int i = 0; i < L; ++i) {
      Distribution d{{e.gold[i], pg[i]}, {e.distractor[i], pd[i]}};
      if (e.cls[i] == PositionClass::uncertain) {
        d[0].p = pg[i];
        d[1].p = pd[i];
        d.push_back({draw(used_tokens), 0.01});
        used_tokens.insert(d.back().tok);
      }
      std::sort(d.begin(), d.end(), [](auto& x, auto& y) { return x.tok < y.tok; });
      e.base.push_back(std::move(d));
    }
    c.entries.push_back(std::move(e));
  }
  c.reindex();
  return c;
}

// ---- exhaustive label oracle ----

struct OracleLabels {
  std::vector<bool> order_dependent;
  std::vector<std::set<TokenId>> reachable;
  std::vector<bool> prone;  // some order yields a non-gold token
  std::size_t states = 0;
  std::size_t finals = 0;
};

inline constexpr int kOracleMaxLength = 8;

// Explores every reveal order (as commitment-state DAG) under the given
// per-step budget. Default budget: one position per step.
inline OracleLabels label_oracle(const SyntheticCorpus& c, const std::string& query_id,
                                 std::vector<int> budget = {}, const std::string& evidence = {}) {
  const auto& e = c.find(query_id);
  const int L = e.length();
  if (L > kOracleMaxLength) throw DataError("label_oracle: length " + std::to_string(L) + " exceeds " + std::to_string(kOracleMaxLength));
  if (budget.empty()) budget.assign(L, 1);
  const auto ev = parse_evidence(evidence);

  std::set<std::vector<TokenId>> seen;
  std::set<std::vector<TokenId>> finals;
  std::vector<int> prefix(budget.size() + 1, 0);
  for (std::size_t k = 0; k < budget.size(); ++k) prefix[k + 1] = prefix[k] + budget[k];
  if (prefix.back() != L) throw DataError("label_oracle: budget does not sum to length");

  auto commit_token = [&](const std::vector<TokenId>& st, int i) {
    Distribution d = world_distribution(e, i, st, ev);
    return argmax(d).tok;
  };

  std::vector<std::vector<TokenId>> stack{std::vector<TokenId>(L, kMasked)};
  while (!stack.empty()) {
    auto st = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(st).second) continue;
    std::vector<int> masked;
    for (int i = 0; i < L; ++i)
      if (st[i] == kMasked) masked.push_back(i);
    if (masked.empty()) {
      finals.insert(st);
      continue;
    }
    const int done = L - static_cast<int>(masked.size());
    std::size_t step = 0;
    while (prefix[step] < done) ++step;
    int k = budget[step];
    while (k == 0) k = budget[++step];
    // every k-subset commits simultaneously against the same state
    std::vector<int> idx(k);
    for (int j = 0; j < k; ++j) idx[j] = j;
    const int m = static_cast<int>(masked.size());
    for (;;) {
      auto next = st;
      for (int j : idx) next[masked[j]] = commit_token(st, masked[j]);
      stack.push_back(std::move(next));
      int j = k - 1;
      while (j >= 0 && idx[j] == m - k + j) --j;
      if (j < 0) break;
      ++idx[j];
      for (int q = j + 1; q < k; ++q) idx[q] = idx[q - 1] + 1;
    }
  }

  OracleLabels out;
  out.states = seen.size();
  out.finals = finals.size();
  out.reachable.assign(L, {});
  for (auto& f : finals)
    for (int i = 0; i < L; ++i) out.reachable[i].insert(f[i]);
  for (int i = 0; i < L; ++i) {
    out.order_dependent.push_back(out.reachable[i].size() >= 2);
    bool bad = false;
    for (auto t : out.reachable[i]) bad |= (t != e.gold[i]);
    out.prone.push_back(bad);
  }
  return out;
}

// ---- JSON ----

inline nlohmann::ordered_json spec_to_json(const CorpusSpec& s) {
  return {{"size", s.size}, {"length", s.length}, {"vocab_size", s.vocab_size}, {"cbw_fraction", s.cbw_fraction},
          {"attractor_fraction", s.attractor_fraction}, {"blocks", s.blocks}, {"main_core", s.main_core},
          {"main_seeds", s.main_seeds}, {"gap", s.gap}, {"weak_core", s.weak_core}, {"weak_seeds", s.weak_seeds},
          {"lambda", {s.lambda_lo, s.lambda_hi}}, {"support_lambda", {s.support_lo, s.support_hi}},
          {"background_mass", s.background_mass}, {"top_k", s.top_k}, {"seed", s.seed}};
}

inline CorpusSpec spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
  s.size = j.value("size", s.size);
  s.length = j.value("length", s.length);
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.cbw_fraction = j.value("cbw_fraction", s.cbw_fraction);
  s.attractor_fraction = j.value("attractor_fraction", s.attractor_fraction);
  s.blocks = j.value("blocks", s.blocks);
  s.main_core = j.value("main_core", s.main_core);
  s.main_seeds = j.value("main_seeds", s.main_seeds);
  s.gap = j.value("gap", s.gap);
  s.weak_core = j.value("weak_core", s.weak_core);
  s.weak_seeds = j.value("weak_seeds", s.weak_seeds);
  if (j.contains("lambda")) {
    s.lambda_lo = j["lambda"].at(0).get<double>();
    s.lambda_hi = j["lambda"].at(1).get<double>();
  }
  if (j.contains("support_lambda")) {
    s.support_lo = j["support_lambda"].at(0).get<double>();
    s.support_hi = j["support_lambda"].at(1).get<double>();
  }
  s.background_mass = j.value("background_mass", s.background_mass);
  s.top_k = j.value("top_k", s.top_k);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline constexpr const char* kCorpusFormat = "oscar-synthetic-corpus";

inline std::string corpus_to_json(const SyntheticCorpus& c) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["format"] = kCorpusFormat;
  j["version"] = c.version;
  j["vocab"] = {{"size", c.vocab.size}, {"mask_id", c.vocab.mask_id}, {"pad_id", c.vocab.pad_id}};
  j["length"] = c.length;
  j["background_mass"] = c.background_mass;
  j["top_k"] = c.top_k;
  j["spec"] = spec_to_json(c.spec);
  oj entries = oj::array();
  for (auto& e : c.entries) {
    oj x;
    x["query_id"] = e.query_id;
    x["seed"] = e.seed;
    x["gold"] = e.gold;
    x["distractor"] = e.distractor;
    std::string cls;
    for (auto k : e.cls) cls += class_code(k);
    x["class"] = cls;
    oj base = oj::array();
    for (auto& d : e.base) {
      oj row = oj::array();
      for (auto& tp : d) row.push_back({tp.tok, tp.p});
      base.push_back(row);
    }
    x["base"] = base;
    oj cp = oj::array();
    for (auto& k : e.couplings) cp.push_back({k.anchor, k.target, k.strength, coupling_name(k.kind)});
    x["couplings"] = cp;
    std::vector<int> prone;
    for (int i = 0; i < e.length(); ++i)
      if (e.prone[i]) prone.push_back(i);
    x["prone"] = prone;
    entries.push_back(x);
  }
  j["entries"] = entries;
  return j.dump(1) + "\n";
}

inline SyntheticCorpus corpus_from_json(const std::string& text) {
  SyntheticCorpus c;
  try {
    auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string{}) != kCorpusFormat) throw DataError("not a synthetic corpus document");
    c.version = j.at("version").get<int>();
    if (c.version != 1) throw DataError("unsupported corpus version " + std::to_string(c.version));
    c.vocab.size = j.at("vocab").at("size").get<std::int64_t>();
    c.vocab.mask_id = j.at("vocab").at("mask_id").get<TokenId>();
    c.vocab.pad_id = j.at("vocab").value("pad_id", kNoToken);
    c.vocab.check();
    c.length = j.at("length").get<int>();
    c.background_mass = j.at("background_mass").get<double>();
    c.top_k = j.at("top_k").get<int>();
    c.spec = spec_from_json(j.at("spec"));
    for (auto& x : j.at("entries")) {
      KnowledgeEntry e;
      e.query_id = x.at("query_id").get<std::string>();
      e.seed = x.at("seed").get<std::uint64_t>();
      e.gold = x.at("gold").get<std::vector<TokenId>>();
      e.distractor = x.at("distractor").get<std::vector<TokenId>>();
      auto cls = x.at("class").get<std::string>();
      for (char ch : cls) {
        if (ch == 'S') e.cls.push_back(PositionClass::stable);
        else if (ch == 'U') e.cls.push_back(PositionClass::uncertain);
        else if (ch == 'C') e.cls.push_back(PositionClass::cbw);
        else throw DataError("unknown position class '" + std::string(1, ch) + "'");
      }
      for (auto& row : x.at("base")) {
        Distribution d;
        for (auto& tp : row) d.push_back({tp.at(0).get<TokenId>(), tp.at(1).get<double>()});
        e.base.push_back(std::move(d));
      }
      for (auto& k : x.at("couplings")) {
        Coupling cp{k.at(0).get<int>(), k.at(1).get<int>(), k.at(2).get<double>(), CouplingKind::attract};
        auto kind = k.at(3).get<std::string>();
        if (kind == "support") cp.kind = CouplingKind::support;
        else if (kind == "agree") cp.kind = CouplingKind::agree;
        else if (kind != "attract") throw DataError("unknown coupling kind '" + kind + "'");
        e.couplings.push_back(cp);
      }
      const int L = static_cast<int>(e.gold.size());
      e.prone.assign(L, false);
      for (int i : x.at("prone").get<std::vector<int>>()) e.prone.at(i) = true;
      if (L != c.length || static_cast<int>(e.distractor.size()) != L || static_cast<int>(e.cls.size()) != L ||
          static_cast<int>(e.base.size()) != L)
        throw DataError("entry '" + e.query_id + "' has inconsistent lengths");
      for (auto& cp : e.couplings)
        if (cp.anchor < 0 || cp.anchor >= L || cp.target < 0 || cp.target >= L || cp.anchor == cp.target)
          throw DataError("entry '" + e.query_id + "' has an invalid coupling");
      c.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corpus: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("corpus: ") + e.what());
  }
  c.reindex();
  return c;
}

inline SyntheticCorpus load_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open corpus '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return corpus_from_json(ss.str());
}

}  // namespace oscar
