#pragma once

// File-mediated pipeline stages behind the CLI. Each stage reads the files
// the previous one wrote, so runs can be resumed and audited.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "oscar/bridge_client.hpp"
#include "oscar/config.hpp"
#include "oscar/pipeline.hpp"
#include "oscar/synthetic.hpp"
#include "oscar/trajectory_io.hpp"

namespace oscar {

namespace fs = std::filesystem;

struct Backend {
  std::shared_ptr<SyntheticCorpus> corpus;  // set for synthetic:
  std::unique_ptr<Denoiser> den;
  std::vector<Query> queries;
  Vocabulary vocab;
};

inline std::vector<Query> load_queries(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open queries '" + path + "'");
  std::vector<Query> out;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.value("text", std::string{})});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("queries line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline Backend open_backend(const RunConfig& cfg) {
  Backend b;
  const auto& d = cfg.denoiser;
  if (d.rfind("synthetic:", 0) == 0) {
    b.corpus = std::make_shared<SyntheticCorpus>(load_corpus(d.substr(10)));
    b.den = std::make_unique<SyntheticDenoiser>(*b.corpus);
    b.queries = b.corpus->queries();
    b.vocab = b.corpus->vocab;
  } else if (d.rfind("bridge:", 0) == 0) {
    auto br = std::make_unique<bridge::BridgeDenoiser>(d.substr(7));
    b.vocab.size = br->vocab_size();
    b.vocab.mask_id = br->mask_id();
    b.den = std::move(br);
    if (cfg.queries.empty()) throw DataError("bridge runs need a queries file (--queries)");
  } else {
    throw DataError("denoiser must be synthetic:PATH or bridge:URL, got '" + d + "'");
  }
  if (!cfg.queries.empty()) b.queries = load_queries(cfg.queries);
  return b;
}

inline std::string file_stem(const std::string& query_id) {
  std::string s = query_id;
  for (auto& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) ch = '_';
  return s;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline TrajectoryFile read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot open '" + p.string() + "'");
  try {
    return read_trajectory_file(f);
  } catch (const IoError& e) {
    throw IoError(e.kind(), p.string() + ": " + std::string(e.what()).substr(IoError::label(e.kind()).size() + 2));
  }
}

// Runs f(k) for k in [0, n) on `jobs` threads.
template <typename F>
void parallel_for(std::size_t n, int jobs, F f) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) f(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (;;) {
        std::size_t k = next++;
        if (k >= n) return;
        try {
          f(k);
        } catch (...) {
          std::lock_guard<std::mutex> lk(m);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline PipelineConfig pipeline_config(const RunConfig& cfg) {
  return {cfg.gen, parse_schedule(cfg.schedule), Aggregation::parse(cfg.agg), parse_execution(cfg.execution)};
}

inline std::unique_ptr<EvidenceProvider> open_provider(const RunConfig& cfg) {
  if (cfg.evidence.empty()) return nullptr;
  return std::make_unique<KeywordProvider>(load_keyword_provider(cfg.evidence));
}

// ---- generate ----

struct GenerateTiming {
  double diversified_seconds = 0;
  double single_chain_seconds = 0;
  double ratio() const { return single_chain_seconds > 0 ? diversified_seconds / single_chain_seconds : 0; }
};

inline GenerateTiming cmd_generate(const RunConfig& cfg, std::ostream& log = std::cout) {
  cfg.check();
  auto b = open_backend(cfg);
  fs::create_directories(cfg.out);
  const auto run_id = fingerprint(cfg);
  const auto mode = parse_execution(cfg.execution);
  const int jobs = b.den->concurrent_safe() ? cfg.jobs : 1;
  std::mutex m;
  GenerateTiming timing;
  parallel_for(b.queries.size(), jobs, [&](std::size_t k) {
    const auto& q = b.queries[k];
    GenerationConfig g = cfg.gen;
    g.seed = query_seed(cfg.gen.seed, q.id);
    auto t0 = std::chrono::steady_clock::now();
    auto set = run_diversified(*b.den, q, g, {}, mode, run_id);
    auto t1 = std::chrono::steady_clock::now();
    run_chain(*b.den, q, g, chain_policy(g.seed, 0), 0);
    auto t2 = std::chrono::steady_clock::now();
    std::ofstream f(fs::path(cfg.out) / (file_stem(q.id) + ".jsonl"), std::ios::binary);
    write_trajectories(f, set);
    std::lock_guard<std::mutex> lk(m);
    timing.diversified_seconds += std::chrono::duration<double>(t1 - t0).count();
    timing.single_chain_seconds += std::chrono::duration<double>(t2 - t1).count();
  });
  nlohmann::ordered_json tj{{"queries", b.queries.size()}, {"chains", cfg.gen.chains}, {"execution", cfg.execution},
                            {"diversified_seconds", timing.diversified_seconds},
                            {"single_chain_seconds", timing.single_chain_seconds}, {"ratio", timing.ratio()}};
  std::ofstream(fs::path(cfg.out) / "timing.json") << tj.dump(2) << "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "generated %zu queries x %d chains (%s): %.3fs, single chain %.3fs, ratio %.2fx\n",
                b.queries.size(), cfg.gen.chains, cfg.execution.c_str(), timing.diversified_seconds,
                timing.single_chain_seconds, timing.ratio());
  log << buf;
  return timing;
}

// ---- localize ----

inline void apply_stage_params(GenerationConfig& g, const RunConfig& cfg) {
  g.alpha = cfg.gen.alpha;
  g.span_window = cfg.gen.span_window;
  g.span_min = cfg.gen.span_min;
  g.refine_steps = cfg.gen.refine_steps;
}

inline void cmd_localize(const RunConfig& cfg, const std::vector<std::string>& files, std::ostream& log = std::cout) {
  cfg.check();
  fs::create_directories(cfg.out);
  std::size_t flagged = 0, spans = 0;
  for (auto& path : files) {
    auto tf = read_file(path);
    auto& g = tf.set.config;
    apply_stage_params(g, cfg);
    auto prof = cross_chain_entropy(tf.set);
    auto u = localize(prof, g.alpha);
    auto ss = aggregate_spans(u, g.span_window, g.span_min, g.length);
    const auto stem = fs::path(cfg.out) / file_stem(tf.set.query_id);
    std::ofstream e(stem.string() + ".entropy.csv", std::ios::binary);
    write_entropy_csv(e, prof, u, ss);
    std::ofstream s(stem.string() + ".spans.csv", std::ios::binary);
    write_spans_csv(s, ss);
    flagged += u.flagged.size();
    spans += ss.spans.size();
  }
  log << "localized " << files.size() << " files: " << flagged << " flagged positions, " << spans << " spans\n";
}

inline std::vector<Span> read_spans_csv(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw DataError("cannot open spans file '" + p.string() + "'");
  std::string line;
  std::getline(f, line);
  if (detail::trim(line) != "span_id,start,end,origin") throw DataError(p.string() + ": unexpected spans header");
  std::vector<Span> out;
  while (std::getline(f, line)) {
    if (detail::trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string id, a, b, o;
    std::getline(ss, id, ',');
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, o, ',');
    Span s{detail::parse_num<int>("start", a), detail::parse_num<int>("end", b), SpanOrigin::raw};
    o = detail::trim(o);
    if (o == "extended") s.origin = SpanOrigin::extended;
    else if (o == "merged") s.origin = SpanOrigin::merged;
    else if (o != "raw") throw DataError(p.string() + ": unknown span origin '" + o + "'");
    out.push_back(s);
  }
  return out;
}

// ---- correct ----

inline double cmd_correct(const RunConfig& cfg, const std::vector<std::string>& files, const std::string& spans_dir,
                          std::ostream& log = std::cout) {
  cfg.check();
  auto b = open_backend(cfg);
  auto provider = open_provider(cfg);
  const auto schedule = parse_schedule(cfg.schedule);
  std::size_t covered = 0, total = 0, changed = 0;
  for (auto& path : files) {
    auto tf = read_file(path);
    auto& set = tf.set;
    apply_stage_params(set.config, cfg);
    const int L = set.config.length;
    SpanSet ss;
    ss.window = set.config.span_window;
    ss.min_length = set.config.span_min;
    ss.spans = read_spans_csv(fs::path(spans_dir) / (file_stem(set.query_id) + ".spans.csv"));
    for (auto& s : ss.spans)
      if (s.a < 0 || s.b >= L || s.a > s.b) throw DataError(path + ": span outside the trajectory length");
    auto prof = cross_chain_entropy(set);
    auto plan = build_plan(set, prof, ss, set.config, provider.get(), schedule, b.vocab);
    Query q{set.query_id, {}};
    for (auto& x : b.queries)
      if (x.id == q.id) q = x;
    auto out = correct(*b.den, q, plan);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    write_trajectories(f, set);
    write_correction(f, out.records(), outcome_record(plan, out));
    covered += ss.covered();
    total += L;
    changed += out.changed.size();
  }
  const double ratio = total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "corrected %zu files: remask ratio %.4f (%zu of %zu positions), %zu tokens changed\n",
                files.size(), ratio, covered, total, changed);
  log << buf;
  return ratio;
}

// ---- labels ----

struct LabelSource {
  LabelProvenance provenance = LabelProvenance::synthetic_oracle;
  std::map<std::string, std::pair<std::vector<bool>, std::vector<TokenId>>> by_query;  // labels, gold
  TokenId pad = kNoToken;

  const std::pair<std::vector<bool>, std::vector<TokenId>>& at(const std::string& qid) const {
    auto it = by_query.find(qid);
    if (it == by_query.end()) throw DataError("no labels for query '" + qid + "'");
    return it->second;
  }
};

inline LabelSource labels_from_corpus(const SyntheticCorpus& c) {
  LabelSource ls;
  ls.pad = c.vocab.pad_id;
  for (auto& e : c.entries) ls.by_query[e.query_id] = {e.prone, e.gold};
  return ls;
}

// {"version":1, "pad_id":?, "queries":[{"query_id", "length", "hallucinated":[[a,b],...], "gold":[...]?}]}
inline LabelSource labels_from_annotations(const std::string& text) {
  LabelSource ls;
  ls.provenance = LabelProvenance::span_annotation;
  try {
    auto j = nlohmann::json::parse(text);
    if (j.value("version", 0) != 1) throw DataError("annotations: unsupported version");
    ls.pad = j.value("pad_id", kNoToken);
    for (auto& q : j.at("queries")) {
      int L = q.at("length").get<int>();
      std::vector<bool> lab(L, false);
      for (auto& s : q.at("hallucinated")) {
        int a = s.at(0).get<int>(), b = s.at(1).get<int>();
        if (a < 0 || b >= L || a > b) throw DataError("annotations: span outside [0, length)");
        for (int i = a; i <= b; ++i) lab[i] = true;
      }
      std::vector<TokenId> gold;
      if (q.contains("gold")) gold = q["gold"].get<std::vector<TokenId>>();
      ls.by_query[q.at("query_id").get<std::string>()] = {lab, gold};
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("annotations: ") + e.what());
  }
  return ls;
}

inline LabelSource open_labels(const RunConfig& cfg) {
  std::string src = cfg.labels.empty() ? cfg.denoiser : cfg.labels;
  if (src.rfind("synthetic:", 0) == 0) return labels_from_corpus(load_corpus(src.substr(10)));
  if (src.rfind("annotations:", 0) == 0) return labels_from_annotations(slurp(src.substr(12)));
  throw DataError("labels must be synthetic:PATH or annotations:PATH");
}

// ---- eval ----

inline void write_report_files(const fs::path& dir, const EvalReport& rep) {
  fs::create_directories(dir);
  std::ofstream(dir / "report.json", std::ios::binary) << report_to_json(rep);
  std::ofstream c(dir / "report.csv", std::ios::binary);
  write_report_csv(c, rep);
  std::ofstream k(dir / "cdh_curve.csv", std::ios::binary);
  write_cdh_csv(k, rep);
  std::ofstream g(dir / "entropy_gap.csv", std::ios::binary);
  write_gap_csv(g, rep);
}

inline EvalReport cmd_eval(const RunConfig& cfg, const std::vector<std::string>& files, std::ostream& log = std::cout) {
  cfg.check();
  auto labels = open_labels(cfg);
  std::vector<EvalItem> items;
  for (auto& path : files) {
    auto tf = read_file(path);
    EvalItem it;
    it.query_id = tf.set.query_id;
    it.profile = cross_chain_entropy(tf.set);
    if (tf.outcome) {
      it.before = tf.set.chains.at(tf.outcome->base_chain).final_tokens;
      it.after = tf.outcome->tokens;
      for (auto& [a, b] : tf.outcome->spans) it.spans.push_back({a, b, SpanOrigin::raw});
    } else {
      it.before = tf.set.chains.at(select_base_chain(tf.set, it.profile)).final_tokens;
      it.after = it.before;
    }
    auto& [lab, gold] = labels.at(it.query_id);
    if (static_cast<int>(lab.size()) != tf.set.config.length) throw DataError(path + ": label length differs from L");
    it.hallucinated = lab;
    it.gold = gold;
    it.set = std::move(tf.set);
    items.push_back(std::move(it));
  }
  auto rep = evaluate(items, Aggregation::parse(cfg.agg), labels.provenance, cfg.gen.seed, labels.pad);
  write_report_files(cfg.out, rep);
  log << "evaluated " << items.size() << " queries -> " << (fs::path(cfg.out) / "report.json").string() << "\n";
  return rep;
}

// ---- in-process pipeline, sweeps ----

inline std::vector<QueryRun> run_pipeline(const RunConfig& cfg, Backend& b) {
  auto pc = pipeline_config(cfg);
  auto provider = open_provider(cfg);
  const auto run_id = fingerprint(cfg);
  std::vector<QueryRun> runs(b.queries.size());
  const int jobs = b.den->concurrent_safe() ? cfg.jobs : 1;
  parallel_for(b.queries.size(), jobs, [&](std::size_t k) {
    runs[k] = run_query(*b.den, b.queries[k], pc, provider.get(), b.vocab, run_id);
  });
  return runs;
}

inline EvalReport evaluate_runs(const RunConfig& cfg, const std::vector<QueryRun>& runs, const LabelSource& labels) {
  std::vector<EvalItem> items;
  for (auto& r : runs) {
    auto& [lab, gold] = labels.at(r.set.query_id);
    items.push_back(eval_item(r, lab, gold));
  }
  return evaluate(items, Aggregation::parse(cfg.agg), labels.provenance, cfg.gen.seed, labels.pad);
}

struct SweepRow {
  RunConfig cell;
  std::string fingerprint;
  EvalReport report;
  double seconds = 0;
  std::size_t peak_bytes = 0;
};

// Bytes held for one query's trajectories (states dominate).
inline std::size_t footprint(const GenerationConfig& g) {
  const std::size_t N = g.chains, L = g.length, T = g.steps;
  return N * ((T + 1) * L * sizeof(TokenId) + L * sizeof(RevealEvent) + L * sizeof(TokenId));
}

inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, std::ostream& log = std::cout) {
  cfg.check();
  auto cells = expand_sweeps(cfg);
  auto b = open_backend(cfg);
  auto labels = open_labels(cfg);
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    auto& c = cells[k];
    c.check();
    auto t0 = std::chrono::steady_clock::now();
    auto runs = run_pipeline(c, b);
    auto rep = evaluate_runs(c, runs, labels);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::size_t corpus_bytes = 0;
    if (b.corpus) corpus_bytes = b.corpus->entries.size() * b.corpus->length * 3 * sizeof(TokenProb);
    rows.push_back({c, fingerprint(c), rep, secs, corpus_bytes + footprint(c.gen) * runs.size()});
    log << "cell " << k + 1 << "/" << cells.size() << " " << rows.back().fingerprint << " done in " << secs << "s\n";
  }
  fs::create_directories(cfg.out);
  std::ofstream f(fs::path(cfg.out) / "sweep.csv", std::ios::binary);
  f << "cell,fingerprint,chains,alpha,refine_steps,span_window,span_min,schedule,auroc,token_auroc,cdh20,f1_before,f1_after,delta_f1,"
       "remask_ratio,cbw_rate,seconds,peak_mem_bytes\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto& r = rows[k];
    using detail::num;
    f << k << ',' << r.fingerprint << ',' << r.cell.gen.chains << ',' << num(r.cell.gen.alpha) << ',' << r.cell.gen.refine_steps << ','
      << r.cell.gen.span_window << ',' << r.cell.gen.span_min << ',' << r.cell.schedule << ',' << num(r.report.auroc) << ',' << num(r.report.token_auroc) << ','
      << num(r.report.cdh_at(20)) << ',' << num(r.report.f1_before) << ',' << num(r.report.f1_after) << ','
      << num(r.report.delta_f1) << ',' << num(r.report.remask_ratio) << ',' << num(r.report.cbw.rate) << ',' << num(r.seconds)
      << ',' << r.peak_bytes << '\n';
  }
  return rows;
}

// ---- validate ----

inline int cmd_validate(const std::vector<std::string>& files, std::ostream& log = std::cout) {
  int bad = 0;
  for (auto& path : files) {
    auto tf = read_file(path);
    auto v = validate(tf.set);
    if (tf.outcome && static_cast<int>(tf.outcome->tokens.size()) != tf.set.config.length)
      v.push_back("outcome length differs from L");
    if (v.empty()) {
      log << path << ": ok\n";
    } else {
      ++bad;
      for (auto& s : v) log << path << ": " << s << "\n";
    }
  }
  return bad;
}

// ---- synthetic corpus + evidence ----

// One passage per query: keyed by the tokens a wrong span would show, naming
// the gold token of every uncertain position.
inline std::string synthetic_evidence_json(const SyntheticCorpus& c) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  auto arr = nlohmann::ordered_json::array();
  for (auto& e : c.entries) {
    std::string key, passage;
    for (int i = 0; i < e.length(); ++i) {
      if (e.cls[i] != PositionClass::uncertain) continue;
      key += (key.empty() ? "" : " ") + c.vocab.name(e.distractor[i]);
      passage += (passage.empty() ? "" : " ") + ("pos=" + std::to_string(i) + " gold=" + std::to_string(e.gold[i]));
    }
    if (!key.empty()) arr.push_back({{"key", key}, {"passage", passage}});
  }
  j["passages"] = arr;
  return j.dump(1) + "\n";
}

}  // namespace oscar
