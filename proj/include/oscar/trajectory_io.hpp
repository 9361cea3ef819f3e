#pragma once

// Line-delimited JSON trajectory files.
//
//   {"k":"meta", ...}                      exactly one, first
//   {"k":"ev", n, t, i, tok, conf}         per chain, commit order
//   {"k":"final", n, tokens}               one per chain
//   {"k":"corr", span, step, i, tok, conf} correction log (appended)
//   {"k":"outcome", ...}                   correction summary (appended)

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oscar/core.hpp"

namespace oscar {

inline constexpr int kTrajectoryVersion = 1;

class IoError : public DataError {
 public:
  enum class Kind { missing_header, malformed_record, version_mismatch, truncated };
  IoError(Kind k, const std::string& what) : DataError(label(k) + ": " + what), kind_(k) {}
  Kind kind() const { return kind_; }

  static std::string label(Kind k) {
    switch (k) {
      case Kind::missing_header: return "missing header";
      case Kind::malformed_record: return "malformed record";
      case Kind::version_mismatch: return "version mismatch";
      case Kind::truncated: return "truncated stream";
    }
    return "io error";
  }

 private:
  Kind kind_;
};

struct CorrRecord {
  int a = 0, b = 0;
  int step = 0;
  int i = 0;
  TokenId tok = 0;
  double conf = 0.0;
  bool operator==(const CorrRecord&) const = default;
};

struct OutcomeRecord {
  int base_chain = 0;
  std::vector<TokenId> tokens;
  std::vector<std::pair<int, int>> spans;
  std::vector<int> changed;
  double remask_ratio = 0.0;
  bool operator==(const OutcomeRecord&) const = default;
};

struct TrajectoryFile {
  TrajectorySet set;
  std::vector<CorrRecord> corr;
  std::optional<OutcomeRecord> outcome;
};

namespace detail {
using ojson = nlohmann::ordered_json;

inline void put(std::ostream& os, const ojson& j) { os << j.dump() << '\n'; }
}  // namespace detail

inline void write_meta(std::ostream& os, const TrajectorySet& set) {
  detail::ojson m;
  m["k"] = "meta";
  m["version"] = kTrajectoryVersion;
  m["run_id"] = set.run_id;
  m["query_id"] = set.query_id;
  m["N"] = set.config.chains;
  m["L"] = set.config.length;
  m["T"] = set.config.steps;
  m["vocab_size"] = set.vocab_size;
  m["mask_id"] = set.mask_id;
  m["seed"] = set.config.seed;
  m["config"] = {{"alpha", set.config.alpha},
                 {"refine_steps", set.config.refine_steps},
                 {"span_window", set.config.span_window},
                 {"span_min", set.config.span_min}};
  m["model_tag"] = set.model_tag;
  if (!set.evidence.empty()) m["evidence"] = set.evidence;
  detail::put(os, m);
}

inline void write_trajectories(std::ostream& os, const TrajectorySet& set) {
  auto bad = validate(set);
  if (!bad.empty()) throw DataError("refusing to write invalid set: " + bad.front());
  write_meta(os, set);
  for (auto& tr : set.chains) {
    for (auto& ev : tr.events) {
      detail::ojson e;
      e["k"] = "ev";
      e["n"] = tr.chain;
      e["t"] = ev.t;
      e["i"] = ev.i;
      e["tok"] = ev.tok;
      e["conf"] = ev.conf;
      detail::put(os, e);
    }
  }
  for (auto& tr : set.chains) {
    detail::ojson f;
    f["k"] = "final";
    f["n"] = tr.chain;
    f["tokens"] = tr.final_tokens;
    detail::put(os, f);
  }
}

inline void write_correction(std::ostream& os, const std::vector<CorrRecord>& log, const OutcomeRecord& out) {
  for (auto& c : log) {
    detail::ojson j;
    j["k"] = "corr";
    j["span"] = {c.a, c.b};
    j["step"] = c.step;
    j["i"] = c.i;
    j["tok"] = c.tok;
    j["conf"] = c.conf;
    detail::put(os, j);
  }
  detail::ojson j;
  j["k"] = "outcome";
  j["base"] = out.base_chain;
  j["tokens"] = out.tokens;
  detail::ojson sp = detail::ojson::array();
  for (auto& [a, b] : out.spans) sp.push_back({a, b});
  j["spans"] = sp;
  j["changed"] = out.changed;
  j["remask_ratio"] = out.remask_ratio;
  detail::put(os, j);
}

inline std::string to_jsonl(const TrajectorySet& set) {
  std::ostringstream os;
  write_trajectories(os, set);
  return os.str();
}

inline TrajectoryFile read_trajectory_file(std::istream& is) {
  using K = IoError::Kind;
  TrajectoryFile out;
  auto& set = out.set;
  std::string line;
  int lineno = 0;
  bool have_meta = false;
  std::vector<std::vector<RevealEvent>> events;
  std::vector<std::vector<TokenId>> finals;
  std::vector<bool> have_final;
  int n_final = 0;

  auto need = [&](const nlohmann::json& j, const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": missing field '" + key + "'");
    return *it;
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (is.eof()) throw IoError(K::truncated, "line " + std::to_string(lineno) + " has no terminating newline");
    if (line.empty()) throw IoError(K::malformed_record, "line " + std::to_string(lineno) + " is empty");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (!j.is_object() || !j.contains("k")) throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": no record kind");
      const std::string k = j["k"].get<std::string>();
      if (!have_meta) {
        if (k != "meta") throw IoError(K::missing_header, "first record is '" + k + "', expected 'meta'");
        int v = need(j, "version").get<int>();
        if (v != kTrajectoryVersion)
          throw IoError(K::version_mismatch, "file version " + std::to_string(v) + ", reader version " + std::to_string(kTrajectoryVersion));
        set.run_id = need(j, "run_id").get<std::string>();
        set.query_id = need(j, "query_id").get<std::string>();
        set.config.chains = need(j, "N").get<int>();
        set.config.length = need(j, "L").get<int>();
        set.config.steps = need(j, "T").get<int>();
        set.vocab_size = need(j, "vocab_size").get<std::int64_t>();
        set.mask_id = need(j, "mask_id").get<TokenId>();
        set.config.seed = need(j, "seed").get<std::uint64_t>();
        const auto& c = need(j, "config");
        set.config.alpha = need(c, "alpha").get<double>();
        set.config.refine_steps = need(c, "refine_steps").get<int>();
        set.config.span_window = need(c, "span_window").get<int>();
        set.config.span_min = need(c, "span_min").get<int>();
        set.model_tag = need(j, "model_tag").get<std::string>();
        if (j.contains("evidence")) set.evidence = j["evidence"].get<std::vector<std::string>>();
        if (set.config.chains < 1 || set.config.length < 1 || set.config.steps < 1)
          throw IoError(K::malformed_record, "meta has non-positive N, L or T");
        events.assign(set.config.chains, {});
        finals.assign(set.config.chains, {});
        have_final.assign(set.config.chains, false);
        have_meta = true;
        continue;
      }
      auto chain_of = [&](const nlohmann::json& r) {
        int n = need(r, "n").get<int>();
        if (n < 0 || n >= set.config.chains) throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": chain index out of range");
        return n;
      };
      if (k == "meta") {
        throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": second meta record");
      } else if (k == "ev") {
        int n = chain_of(j);
        if (have_final[n]) throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": event after final record");
        events[n].push_back({need(j, "t").get<int>(), need(j, "i").get<int>(), need(j, "tok").get<TokenId>(), need(j, "conf").get<double>()});
      } else if (k == "final") {
        int n = chain_of(j);
        if (have_final[n]) throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": duplicate final record");
        finals[n] = need(j, "tokens").get<std::vector<TokenId>>();
        have_final[n] = true;
        ++n_final;
      } else if (k == "corr") {
        auto sp = need(j, "span").get<std::vector<int>>();
        if (sp.size() != 2) throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": span must be [a,b]");
        out.corr.push_back({sp[0], sp[1], need(j, "step").get<int>(), need(j, "i").get<int>(), need(j, "tok").get<TokenId>(), need(j, "conf").get<double>()});
      } else if (k == "outcome") {
        OutcomeRecord o;
        o.base_chain = need(j, "base").get<int>();
        o.tokens = need(j, "tokens").get<std::vector<TokenId>>();
        for (auto& s : need(j, "spans")) o.spans.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
        o.changed = need(j, "changed").get<std::vector<int>>();
        o.remask_ratio = need(j, "remask_ratio").get<double>();
        out.outcome = std::move(o);
      } else {
        throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": unknown record kind '" + k + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(K::malformed_record, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_meta) throw IoError(K::missing_header, "stream has no meta record");
  if (n_final < set.config.chains)
    throw IoError(K::truncated, "found " + std::to_string(n_final) + " of " + std::to_string(set.config.chains) + " final records");

  for (int n = 0; n < set.config.chains; ++n) {
    Trajectory tr;
    try {
      tr = replay(n, set.config.length, set.config.steps, events[n]);
    } catch (const DataError& e) {
      throw IoError(K::malformed_record, "chain " + std::to_string(n) + ": " + e.what());
    }
    if (tr.final_tokens != finals[n])
      throw IoError(K::malformed_record, "chain " + std::to_string(n) + ": final record disagrees with replayed events");
    set.chains.push_back(std::move(tr));
  }
  return out;
}

inline TrajectorySet read_trajectories(std::istream& is) { return read_trajectory_file(is).set; }

inline TrajectorySet from_jsonl(const std::string& s) {
  std::istringstream is(s);
  return read_trajectories(is);
}

}  // namespace oscar
