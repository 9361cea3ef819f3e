#pragma once

// Trajectory domain types: vocabulary, generation config, chain states,
// reveal events and the per-query trajectory set.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscar {

using TokenId = std::int32_t;

// MASKED lives outside the vocabulary so it can never be counted as a token.
inline constexpr TokenId kMasked = -1;
inline constexpr TokenId kNoToken = -1;

// Bad input files, malformed records, inconsistent arguments (exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Denoiser or bridge failure (exit code 3).
struct DenoiserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Vocabulary {
  std::int64_t size = 2;
  TokenId mask_id = 0;
  TokenId pad_id = kNoToken;  // ordinary member used to right-pad short answers
  std::map<TokenId, std::string> names;

  std::string name(TokenId t) const {
    auto it = names.find(t);
    if (it != names.end()) return it->second;
    return "tok" + std::to_string(t);
  }

  void check() const {
    if (size < 2) throw DataError("vocabulary size must be >= 2");
    if (mask_id < 0 || mask_id >= size) throw DataError("mask_id outside vocabulary");
    if (pad_id != kNoToken && (pad_id < 0 || pad_id >= size)) throw DataError("pad_id outside vocabulary");
    std::set<std::string> seen;
    for (auto& [id, s] : names) {
      if (!seen.insert(s).second) throw DataError("duplicate display name '" + s + "'");
    }
  }

  bool operator==(const Vocabulary&) const = default;
};

struct GenerationConfig {
  int length = 32;       // L
  int steps = 32;        // T
  int chains = 8;        // N
  double alpha = 0.2;
  int refine_steps = 8;  // T_r
  int span_window = 2;   // w
  int span_min = 3;      // l_min
  std::uint64_t seed = 0;

  void check() const {
    if (length < 1) throw DataError("length must be positive");
    if (steps < 1) throw DataError("steps must be positive");
    if (steps > length) throw DataError("steps must not exceed length (per-step budget would be 0)");
    if (chains < 1) throw DataError("chains must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must be in (0,1)");
    if (refine_steps < 1) throw DataError("refine_steps must be positive");
    if (span_window < 0) throw DataError("span_window must be non-negative");
    if (span_min < 1) throw DataError("span_min must be positive");
  }

  bool operator==(const GenerationConfig&) const = default;
};

struct ChainState {
  std::vector<TokenId> tokens;
  int t = 0;
  int chain = 0;

  bool operator==(const ChainState&) const = default;
};

struct RevealEvent {
  int t = 0;
  int i = 0;
  TokenId tok = 0;
  double conf = 0.0;

  bool operator==(const RevealEvent&) const = default;
};

struct Trajectory {
  int chain = 0;
  std::vector<RevealEvent> events;  // commit order
  std::vector<ChainState> states;   // y^(0..T)
  std::vector<TokenId> final_tokens;

  bool operator==(const Trajectory&) const = default;
};

// Rebuild states and final tokens from the reveal log.
inline Trajectory replay(int chain, int length, int steps, std::vector<RevealEvent> events) {
  Trajectory tr;
  tr.chain = chain;
  tr.events = std::move(events);
  std::vector<TokenId> cur(length, kMasked);
  tr.states.reserve(steps + 1);
  tr.states.push_back({cur, 0, chain});
  std::size_t e = 0;
  for (int t = 1; t <= steps; ++t) {
    while (e < tr.events.size() && tr.events[e].t == t) {
      const auto& ev = tr.events[e++];
      if (ev.i < 0 || ev.i >= length) throw DataError("reveal event position out of range");
      cur[ev.i] = ev.tok;
    }
    tr.states.push_back({cur, t, chain});
  }
  if (e != tr.events.size()) throw DataError("reveal events not ordered by step or step out of range");
  tr.final_tokens = cur;
  return tr;
}

struct TrajectorySet {
  std::string run_id;
  std::string query_id;
  GenerationConfig config;
  std::int64_t vocab_size = 2;
  TokenId mask_id = 0;
  std::string model_tag;
  std::vector<Trajectory> chains;
  std::vector<std::string> evidence;  // per chain; empty when unused

  int length() const { return config.length; }
  int steps() const { return config.steps; }
  int size() const { return static_cast<int>(chains.size()); }

  bool operator==(const TrajectorySet&) const = default;
};

// Every invariant violation, as text. Never throws on bad data.
inline std::vector<std::string> validate(const TrajectorySet& set) {
  std::vector<std::string> out;
  const int L = set.config.length, T = set.config.steps;
  if (L < 1 || T < 1) {
    out.push_back("config: non-positive length or steps");
    return out;
  }
  if (set.chains.empty()) out.push_back("set has no chains");
  if (!set.evidence.empty() && set.evidence.size() != set.chains.size())
    out.push_back("evidence count differs from chain count");
  for (std::size_t k = 0; k < set.chains.size(); ++k) {
    const auto& tr = set.chains[k];
    const std::string who = "chain " + std::to_string(tr.chain);
    if (tr.chain != static_cast<int>(k)) out.push_back(who + ": chain index gap (expected " + std::to_string(k) + ")");
    if (static_cast<int>(tr.states.size()) != T + 1) {
      out.push_back(who + ": expected " + std::to_string(T + 1) + " states, found " + std::to_string(tr.states.size()));
      continue;
    }
    bool shape_ok = true;
    for (auto& s : tr.states) {
      if (static_cast<int>(s.tokens.size()) != L) shape_ok = false;
    }
    if (!shape_ok || static_cast<int>(tr.final_tokens.size()) != L) {
      out.push_back(who + ": state length differs from L");
      continue;
    }
    for (int t = 0; t <= T; ++t) {
      const auto& s = tr.states[t];
      if (s.t != t) out.push_back(who + ": state " + std::to_string(t) + " carries step " + std::to_string(s.t));
      if (s.chain != tr.chain) out.push_back(who + ": state " + std::to_string(t) + " carries chain " + std::to_string(s.chain));
    }
    for (int i = 0; i < L; ++i) {
      if (tr.states[0].tokens[i] != kMasked)
        out.push_back(who + ": position " + std::to_string(i) + " committed at t=0");
      if (tr.states[T].tokens[i] == kMasked)
        out.push_back(who + ": position " + std::to_string(i) + " still masked at t=T");
      for (int t = 1; t <= T; ++t) {
        TokenId prev = tr.states[t - 1].tokens[i], now = tr.states[t].tokens[i];
        if (prev != kMasked && now != prev) {
          out.push_back(who + ": position " + std::to_string(i) + " changed after commit at t=" + std::to_string(t));
          break;
        }
      }
    }
    std::vector<int> seen(L, 0);
    int last_t = 0;
    bool events_ok = true;
    for (auto& ev : tr.events) {
      if (ev.i < 0 || ev.i >= L || ev.t < 1 || ev.t > T) {
        out.push_back(who + ": reveal event out of range");
        events_ok = false;
        continue;
      }
      if (ev.t < last_t) {
        out.push_back(who + ": reveal events out of step order");
        events_ok = false;
      }
      last_t = ev.t;
      seen[ev.i]++;
      if (!(ev.conf >= 0.0 && ev.conf <= 1.0)) out.push_back(who + ": confidence outside [0,1] at position " + std::to_string(ev.i));
      if (ev.tok < 0 || ev.tok >= set.vocab_size) out.push_back(who + ": token outside vocabulary at position " + std::to_string(ev.i));
    }
    for (int i = 0; i < L; ++i) {
      if (seen[i] != 1) {
        // a never-revealed position was already reported as still masked
        if (!(seen[i] == 0 && tr.states[T].tokens[i] == kMasked))
          out.push_back(who + ": position " + std::to_string(i) + " revealed " + std::to_string(seen[i]) + " times");
        events_ok = false;
      }
    }
    if (!events_ok) continue;
    Trajectory re = replay(tr.chain, L, T, tr.events);
    for (int t = 0; t <= T; ++t) {
      if (re.states[t].tokens != tr.states[t].tokens) {
        for (int i = 0; i < L; ++i) {
          if (re.states[t].tokens[i] != tr.states[t].tokens[i]) {
            out.push_back(who + ": replay mismatch at t=" + std::to_string(t) + " position " + std::to_string(i));
            break;
          }
        }
      }
    }
    if (re.final_tokens != tr.final_tokens) out.push_back(who + ": replay mismatch in final tokens");
  }
  return out;
}

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

inline std::map<TokenId, Rational> empirical_distribution(const TrajectorySet& set, int position) {
  if (position < 0 || position >= set.config.length) throw DataError("position out of range");
  std::map<TokenId, Rational> out;
  const std::int64_t n = set.size();
  for (auto& tr : set.chains) out[tr.final_tokens.at(position)].num++;
  for (auto& [tok, r] : out) r.den = n;
  return out;
}

}  // namespace oscar
