#pragma once

// Reveal policies, step budgets and the diversified parallel decoder.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "oscar/core.hpp"
#include "oscar/denoiser.hpp"
#include "oscar/rng.hpp"

namespace oscar {

struct Query {
  std::string id;
  std::string text;  // empty: the id doubles as the text
  const std::string& prompt() const { return text.empty() ? id : text; }
};

enum class PolicyKind { confidence, random, entropy, fixed };

inline const char* policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::confidence: return "confidence";
    case PolicyKind::random: return "random";
    case PolicyKind::entropy: return "entropy";
    case PolicyKind::fixed: return "fixed";
  }
  return "?";
}

// count positions over steps; the first count % steps steps get one extra.
// Steps may be 0 when count < steps (correction of short spans).
inline std::vector<int> balanced_budget(int count, int steps) {
  std::vector<int> b(steps, count / steps);
  for (int k = 0; k < count % steps; ++k) b[k]++;
  return b;
}

struct RevealPolicy {
  std::vector<PolicyKind> schedule;  // per step, 1-based t -> schedule[t-1]; last entry repeats
  std::uint64_t seed = 0;
  std::vector<int> order;  // for PolicyKind::fixed

  PolicyKind at(int t) const {
    if (schedule.empty()) return PolicyKind::confidence;
    return schedule[std::min<std::size_t>(t - 1, schedule.size() - 1)];
  }

  static RevealPolicy confidence() { return {{PolicyKind::confidence}, 0, {}}; }
  static RevealPolicy random(std::uint64_t seed) { return {{PolicyKind::random}, seed, {}}; }
  static RevealPolicy entropy() { return {{PolicyKind::entropy}, 0, {}}; }
  static RevealPolicy fixed(std::vector<int> order) { return {{PolicyKind::fixed}, 0, std::move(order)}; }
  // 1 confidence step then (steps-1) random steps
  static RevealPolicy hybrid(int steps, std::uint64_t seed) {
    RevealPolicy p{{PolicyKind::confidence}, seed, {}};
    for (int t = 1; t < steps; ++t) p.schedule.push_back(PolicyKind::random);
    return p;
  }
};

inline double distribution_entropy(const Distribution& d) {
  double h = 0.0;
  for (auto& tp : d)
    if (tp.p > 0.0) h -= tp.p * std::log(tp.p);
  return h;
}

// One chain's decoding state across steps.
class ChainStepper {
 public:
  ChainStepper(std::vector<TokenId> init, int steps, RevealPolicy policy, int chain)
      : tokens_(std::move(init)), policy_(std::move(policy)), chain_(chain) {
    int masked = 0;
    for (auto t : tokens_) masked += (t == kMasked);
    budget_ = balanced_budget(masked, steps);
  }

  bool needs_call(int t) const { return budget_[t - 1] > 0; }

  DenoiseRequest request(const Query& q, const std::string& evidence) const { return {q.prompt(), tokens_, evidence}; }

  void apply(int t, const DenoiseRequest& req, const DenoiseResponse& resp, std::int64_t vocab_size, double tol = 1e-9) {
    try {
      check_response(req, resp, vocab_size, tol);
    } catch (const DenoiserError& e) {
      throw DenoiserError("step " + std::to_string(t) + ": " + e.what());
    }
    const int k = budget_[t - 1];
    std::vector<std::size_t> pick;  // indices into resp
    switch (policy_.at(t)) {
      case PolicyKind::confidence:
      case PolicyKind::entropy: {
        const bool by_conf = policy_.at(t) == PolicyKind::confidence;
        std::vector<std::pair<double, std::size_t>> keyed;
        for (std::size_t r = 0; r < resp.size(); ++r) {
          double key = by_conf ? -argmax(resp[r].probs).p : distribution_entropy(resp[r].probs);
          keyed.push_back({key, r});
        }
        // resp is ascending by position, so stable ordering breaks ties by position
        std::stable_sort(keyed.begin(), keyed.end(), [](auto& a, auto& b) { return a.first < b.first; });
        for (int j = 0; j < k; ++j) pick.push_back(keyed[j].second);
        break;
      }
      case PolicyKind::random: {
        Rng rng(derive(policy_.seed, static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> all(resp.size());
        for (std::size_t r = 0; r < all.size(); ++r) all[r] = r;
        pick = rng.sample(all, k);
        break;
      }
      case PolicyKind::fixed: {
        for (int pos : policy_.order) {
          if (static_cast<int>(pick.size()) == k) break;
          for (std::size_t r = 0; r < resp.size(); ++r)
            if (resp[r].i == pos) pick.push_back(r);
        }
        if (static_cast<int>(pick.size()) != k) throw DataError("fixed reveal order does not cover the masked positions");
        break;
      }
    }
    for (auto r : pick) {
      TokenProb best = argmax(resp[r].probs);
      tokens_[resp[r].i] = best.tok;
      events_.push_back({t, resp[r].i, best.tok, best.p});
    }
  }

  const std::vector<TokenId>& tokens() const { return tokens_; }
  const std::vector<RevealEvent>& events() const { return events_; }
  int chain() const { return chain_; }

 private:
  std::vector<TokenId> tokens_;
  std::vector<int> budget_;
  RevealPolicy policy_;
  int chain_;
  std::vector<RevealEvent> events_;
};

struct RefineResult {
  std::vector<RevealEvent> events;
  std::vector<TokenId> tokens;
  int calls = 0;
};

// Denoise whatever is masked in init over `steps` steps. Steps with an empty
// budget do not call the denoiser.
inline RefineResult refine(Denoiser& den, const Query& q, const std::string& evidence, std::vector<TokenId> init,
                           int steps, const RevealPolicy& policy, int chain = 0) {
  ChainStepper st(std::move(init), steps, policy, chain);
  RefineResult out;
  for (int t = 1; t <= steps; ++t) {
    if (!st.needs_call(t)) continue;
    auto req = st.request(q, evidence);
    auto resp = den.denoise(req);
    ++out.calls;
    st.apply(t, req, resp, den.vocab_size(), den.tolerance());
  }
  out.events = st.events();
  out.tokens = st.tokens();
  return out;
}

inline Trajectory run_chain(Denoiser& den, const Query& q, const GenerationConfig& cfg, const RevealPolicy& policy,
                            int chain, const std::string& evidence = {}) {
  cfg.check();
  try {
    auto r = refine(den, q, evidence, std::vector<TokenId>(cfg.length, kMasked), cfg.steps, policy, chain);
    return replay(chain, cfg.length, cfg.steps, std::move(r.events));
  } catch (const DenoiserError& e) {
    throw DenoiserError("chain " + std::to_string(chain) + ": " + e.what());
  }
}

inline RevealPolicy chain_policy(std::uint64_t seed, int chain) {
  return RevealPolicy::random(derive(seed, static_cast<std::uint64_t>(chain)));
}

enum class Execution {
  batched,      // one denoise_batch call per step for all chains
  serial,       // chain after chain
  interleaved,  // step-major, one call per chain, chains in reverse order
};

inline TrajectorySet run_diversified(Denoiser& den, const Query& q, const GenerationConfig& cfg,
                                     const std::string& evidence = {}, Execution mode = Execution::batched,
                                     const std::string& run_id = {}) {
  cfg.check();
  TrajectorySet set;
  set.run_id = run_id;
  set.query_id = q.id;
  set.config = cfg;
  set.vocab_size = den.vocab_size();
  set.mask_id = den.mask_id();
  set.model_tag = den.model_tag();
  if (!evidence.empty()) set.evidence.assign(cfg.chains, evidence);

  if (mode == Execution::serial) {
    for (int n = 0; n < cfg.chains; ++n) set.chains.push_back(run_chain(den, q, cfg, chain_policy(cfg.seed, n), n, evidence));
    return set;
  }

  std::vector<ChainStepper> chains;
  for (int n = 0; n < cfg.chains; ++n)
    chains.emplace_back(std::vector<TokenId>(cfg.length, kMasked), cfg.steps, chain_policy(cfg.seed, n), n);
  for (int t = 1; t <= cfg.steps; ++t) {
    if (mode == Execution::batched) {
      std::vector<DenoiseRequest> reqs;
      for (auto& c : chains) reqs.push_back(c.request(q, evidence));
      std::vector<DenoiseResponse> resps;
      try {
        resps = den.denoise_batch(reqs);
      } catch (const DenoiserError& e) {
        throw DenoiserError("batched step " + std::to_string(t) + ": " + e.what());
      }
      if (resps.size() != reqs.size()) throw DenoiserError("batch returned " + std::to_string(resps.size()) + " responses for " + std::to_string(reqs.size()) + " requests");
      for (std::size_t n = 0; n < chains.size(); ++n) {
        try {
          chains[n].apply(t, reqs[n], resps[n], den.vocab_size(), den.tolerance());
        } catch (const DenoiserError& e) {
          throw DenoiserError("chain " + std::to_string(n) + ": " + e.what());
        }
      }
    } else {
      for (int n = cfg.chains - 1; n >= 0; --n) {
        auto req = chains[n].request(q, evidence);
        try {
          chains[n].apply(t, req, den.denoise(req), den.vocab_size(), den.tolerance());
        } catch (const DenoiserError& e) {
          throw DenoiserError("chain " + std::to_string(n) + ": " + e.what());
        }
      }
    }
  }
  for (auto& c : chains) set.chains.push_back(replay(c.chain(), cfg.length, cfg.steps, c.events()));
  return set;
}

}  // namespace oscar
