#pragma once

// Run configuration: an INI-style document with [sections] and key = value
// lines. Sweep lists are comma separated and expand to a cross product in
// declaration order (first declared dimension varies slowest).
//
//   [generation]   length steps chains seed execution
//   [localization] alpha span_window span_min
//   [correction]   refine_steps schedule evidence
//   [eval]         agg labels
//   [run]          denoiser queries out jobs
//   [sweep]        chains alpha refine_steps span_window span_min schedule

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oscar/core.hpp"
#include "oscar/correction.hpp"
#include "oscar/engine.hpp"
#include "oscar/metrics.hpp"
#include "oscar/rng.hpp"

namespace oscar {

struct RunConfig {
  GenerationConfig gen;
  std::string denoiser;  // synthetic:PATH | bridge:URL
  std::string queries;   // JSONL of {"id","text"}; bridge runs only
  std::string evidence;  // evidence corpus path
  std::string labels;    // synthetic:PATH | annotations:PATH; default follows the denoiser
  std::string agg = "mean";
  std::string schedule = "hybrid";
  std::string execution = "batched";
  std::string out = "out";
  int jobs = 1;
  std::vector<std::pair<std::string, std::vector<std::string>>> sweeps;

  void check() const {
    gen.check();
    Aggregation::parse(agg);
    parse_schedule(schedule);
    if (execution != "batched" && execution != "serial" && execution != "interleaved")
      throw DataError("execution must be batched|serial|interleaved");
    if (jobs < 1) throw DataError("jobs must be positive");
  }
};

inline Execution parse_execution(const std::string& s) {
  if (s == "serial") return Execution::serial;
  if (s == "interleaved") return Execution::interleaved;
  return Execution::batched;
}

namespace detail {
inline std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  auto b = s.find_last_not_of(" \t\r");
  std::string t = s.substr(a, b - a + 1);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
  return t;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string x;
  while (std::getline(ss, x, ',')) {
    x = trim(x);
    if (!x.empty()) out.push_back(x);
  }
  return out;
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_same_v<T, double>) out = std::stod(v, &used);
    else if constexpr (std::is_same_v<T, std::uint64_t>) out = std::stoull(v, &used);
    else out = static_cast<T>(std::stol(v, &used));
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw DataError("config: bad value '" + v + "' for " + key);
  }
}
}  // namespace detail

inline const std::vector<std::string>& sweepable_keys() {
  static const std::vector<std::string> k{"chains", "alpha", "refine_steps", "span_window", "span_min", "schedule"};
  return k;
}

// Apply one key (generation/localization/correction names share a namespace).
inline void set_key(RunConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_num;
  if (key == "length") c.gen.length = parse_num<int>(key, v);
  else if (key == "steps") c.gen.steps = parse_num<int>(key, v);
  else if (key == "chains") c.gen.chains = parse_num<int>(key, v);
  else if (key == "seed") c.gen.seed = parse_num<std::uint64_t>(key, v);
  else if (key == "alpha") c.gen.alpha = parse_num<double>(key, v);
  else if (key == "refine_steps") c.gen.refine_steps = parse_num<int>(key, v);
  else if (key == "span_window") c.gen.span_window = parse_num<int>(key, v);
  else if (key == "span_min") c.gen.span_min = parse_num<int>(key, v);
  else if (key == "execution") c.execution = v;
  else if (key == "schedule") c.schedule = v;
  else if (key == "evidence") c.evidence = v;
  else if (key == "agg") c.agg = v;
  else if (key == "labels") c.labels = v;
  else if (key == "denoiser") c.denoiser = v;
  else if (key == "queries") c.queries = v;
  else if (key == "out") c.out = v;
  else if (key == "jobs") c.jobs = parse_num<int>(key, v);
  else throw DataError("config: unknown key '" + key + "'");
}

inline RunConfig parse_config(std::istream& is) {
  RunConfig c;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw DataError("config line " + std::to_string(lineno) + ": unterminated section");
      section = detail::trim(line.substr(1, line.size() - 2));
      static const std::vector<std::string> known{"generation", "localization", "correction", "eval", "run", "sweep"};
      if (std::find(known.begin(), known.end(), section) == known.end())
        throw DataError("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq)), val = detail::trim(line.substr(eq + 1));
    if (section == "sweep") {
      auto& ks = sweepable_keys();
      if (std::find(ks.begin(), ks.end(), key) == ks.end()) throw DataError("config: '" + key + "' is not sweepable");
      auto vals = detail::split_list(val);
      if (vals.empty()) throw DataError("config: empty sweep list for " + key);
      for (auto& [k, v] : c.sweeps)
        if (k == key) throw DataError("config: sweep over " + key + " declared twice");
      c.sweeps.emplace_back(key, vals);
    } else {
      set_key(c, key, val);
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config '" + path + "'");
  return parse_config(f);
}

// Cross product of the sweep lists, declaration order, last dimension fastest.
inline std::vector<RunConfig> expand_sweeps(const RunConfig& base) {
  std::vector<RunConfig> cells{base};
  for (auto& c : cells) c.sweeps.clear();
  for (auto& [key, vals] : base.sweeps) {
    std::vector<RunConfig> next;
    for (auto& c : cells)
      for (auto& v : vals) {
        RunConfig x = c;
        set_key(x, key, v);
        next.push_back(std::move(x));
      }
    cells = std::move(next);
  }
  return cells;
}

// Canonical text of everything that affects results (not out, jobs, execution).
inline std::string canonical(const RunConfig& c) {
  char a[40];
  std::snprintf(a, sizeof a, "%.17g", c.gen.alpha);
  std::ostringstream os;
  os << "length=" << c.gen.length << ";steps=" << c.gen.steps << ";chains=" << c.gen.chains << ";alpha=" << a
     << ";refine_steps=" << c.gen.refine_steps << ";span_window=" << c.gen.span_window << ";span_min=" << c.gen.span_min
     << ";seed=" << c.gen.seed << ";schedule=" << c.schedule << ";agg=" << c.agg << ";denoiser=" << c.denoiser
     << ";evidence=" << c.evidence << ";labels=" << c.labels << ";queries=" << c.queries;
  return os.str();
}

inline std::string fingerprint(const RunConfig& c) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical(c))));
  return buf;
}

}  // namespace oscar
