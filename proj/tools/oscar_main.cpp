// oscar: command-line driver for the file-mediated pipeline.

#include <algorithm>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "oscar/runner.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, schedule, agg, denoiser, evidence, labels, queries, execution;
  std::optional<int> chains, refine_steps, span_window, span_min, length, steps, jobs;
  std::optional<double> alpha;
  std::vector<std::string> files;
  std::string in;
};

void add_common(CLI::App* sc, Flags& f) {
  sc->add_option("--config", f.config, "run config file");
  sc->add_option("--seed", f.seed, "run seed");
  sc->add_option("--out", f.out, "output directory");
  sc->add_option("--chains", f.chains, "number of chains N");
  sc->add_option("--alpha", f.alpha, "localization quantile level");
  sc->add_option("--refine-steps", f.refine_steps, "correction steps T_r");
  sc->add_option("--span-window", f.span_window, "span extension w");
  sc->add_option("--span-min", f.span_min, "minimum raw span length");
  sc->add_option("--schedule", f.schedule, "learned|random|hybrid|entropy");
  sc->add_option("--agg", f.agg, "mean|max|topk:K");
  sc->add_option("--denoiser", f.denoiser, "synthetic:PATH or bridge:URL");
  sc->add_option("--evidence", f.evidence, "evidence corpus (JSON)");
  sc->add_option("--labels", f.labels, "synthetic:PATH or annotations:PATH");
  sc->add_option("--queries", f.queries, "queries JSONL for bridge runs");
  sc->add_option("--execution", f.execution, "batched|serial|interleaved");
  sc->add_option("--length", f.length, "response length L");
  sc->add_option("--steps", f.steps, "denoising steps T");
  sc->add_option("--jobs", f.jobs, "worker threads");
}

oscar::RunConfig resolve(const Flags& f) {
  oscar::RunConfig c = f.config.empty() ? oscar::RunConfig{} : oscar::load_config(f.config);
  if (f.seed) c.gen.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.chains) c.gen.chains = *f.chains;
  if (f.alpha) c.gen.alpha = *f.alpha;
  if (f.refine_steps) c.gen.refine_steps = *f.refine_steps;
  if (f.span_window) c.gen.span_window = *f.span_window;
  if (f.span_min) c.gen.span_min = *f.span_min;
  if (f.length) c.gen.length = *f.length;
  if (f.steps) c.gen.steps = *f.steps;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.schedule) c.schedule = *f.schedule;
  if (f.agg) c.agg = *f.agg;
  if (f.denoiser) c.denoiser = *f.denoiser;
  if (f.evidence) c.evidence = *f.evidence;
  if (f.labels) c.labels = *f.labels;
  if (f.queries) c.queries = *f.queries;
  if (f.execution) c.execution = *f.execution;
  return c;
}

// Positional files, or every trajectory file in --in.
std::vector<std::string> inputs(const Flags& f) {
  std::vector<std::string> out = f.files;
  if (!f.in.empty()) {
    std::vector<std::string> found;
    for (auto& e : std::filesystem::directory_iterator(f.in))
      if (e.path().extension() == ".jsonl") found.push_back(e.path().string());
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  if (out.empty()) throw CLI::ValidationError("inputs", "no trajectory files given (positional or --in DIR)");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oscar: commitment-uncertainty localization and targeted correction"};
  app.require_subcommand(1);
  Flags f;

  auto* corpus = app.add_subcommand("make-corpus", "write a synthetic corpus");
  std::string corpus_path, evidence_path;
  oscar::CorpusSpec spec;
  corpus->add_option("path", corpus_path, "corpus JSON to write")->required();
  corpus->add_option("--size", spec.size);
  corpus->add_option("--length", spec.length);
  corpus->add_option("--vocab", spec.vocab_size);
  corpus->add_option("--cbw", spec.cbw_fraction);
  corpus->add_option("--blocks", spec.blocks);
  corpus->add_option("--seed", spec.seed);
  corpus->add_option("--evidence", evidence_path, "also write a matching evidence corpus");

  auto* gen = app.add_subcommand("generate", "diversified parallel decoding");
  auto* loc = app.add_subcommand("localize", "entropy profiles and spans");
  auto* cor = app.add_subcommand("correct", "targeted remasking of localized spans");
  auto* ev = app.add_subcommand("eval", "reports and plot data");
  auto* sw = app.add_subcommand("sweep", "run every sweep cell end to end");
  auto* val = app.add_subcommand("validate", "check trajectory files");
  std::string spans_dir;
  for (auto* sc : {gen, loc, cor, ev, sw, val}) add_common(sc, f);
  for (auto* sc : {loc, cor, ev, val}) {
    sc->add_option("files", f.files, "trajectory files");
    sc->add_option("--in", f.in, "directory of trajectory files");
  }
  cor->add_option("--spans", spans_dir, "directory holding <query>.spans.csv (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*corpus) {
      auto c = oscar::make_corpus(spec);
      std::ofstream(corpus_path, std::ios::binary) << oscar::corpus_to_json(c);
      if (!evidence_path.empty()) std::ofstream(evidence_path, std::ios::binary) << oscar::synthetic_evidence_json(c);
      std::cout << "wrote " << c.entries.size() << " queries to " << corpus_path << "\n";
      return 0;
    }
    if (*val) return oscar::cmd_validate(inputs(f)) == 0 ? 0 : 2;
    auto cfg = resolve(f);
    if (*gen) oscar::cmd_generate(cfg);
    else if (*loc) oscar::cmd_localize(cfg, inputs(f));
    else if (*cor) oscar::cmd_correct(cfg, inputs(f), spans_dir.empty() ? cfg.out : spans_dir);
    else if (*ev) oscar::cmd_eval(cfg, inputs(f));
    else if (*sw) oscar::cmd_sweep(cfg);
    return 0;
  } catch (const CLI::Error& e) {
    std::cerr << "oscar: " << e.what() << "\n";
    return 1;
  } catch (const oscar::DenoiserError& e) {
    std::cerr << "oscar: denoiser failure: " << e.what() << "\n";
    return 3;
  } catch (const oscar::DataError& e) {
    std::cerr << "oscar: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "oscar: " << e.what() << "\n";
    return 2;
  }
}
