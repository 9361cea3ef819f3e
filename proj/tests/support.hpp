#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>

#include "oscar/core.hpp"
#include "oscar/denoiser.hpp"
#include "oscar/engine.hpp"
#include "oscar/rng.hpp"

namespace testing_support {

using namespace oscar;

// Denoiser defined by a function of (position, current tokens).
class FnDenoiser : public Denoiser {
 public:
  using Fn = std::function<Distribution(int, const std::vector<TokenId>&)>;
  FnDenoiser(std::int64_t V, Fn fn) : V_(V), fn_(std::move(fn)) {}
  DenoiseResponse denoise(const DenoiseRequest& req) override {
    DenoiseResponse r;
    for (int i = 0; i < static_cast<int>(req.tokens.size()); ++i)
      if (req.tokens[i] == kMasked) r.push_back({i, fn_(i, req.tokens)});
    return r;
  }
  std::int64_t vocab_size() const override { return V_; }
  TokenId mask_id() const override { return 0; }
  std::string model_tag() const override { return "fn"; }

 private:
  std::int64_t V_;
  Fn fn_;
};

// A valid random set; chains follow random reveal orders with random tokens.
inline TrajectorySet random_set(std::uint64_t seed, int N, int L, int T, std::int64_t V = 50) {
  Rng rng(seed);
  TrajectorySet s;
  s.run_id = "r" + std::to_string(seed);
  s.query_id = "q" + std::to_string(rng.bounded(1000));
  s.config.length = L;
  s.config.steps = T;
  s.config.chains = N;
  s.config.seed = seed;
  s.config.alpha = 0.05 + 0.9 * rng.uniform();
  s.vocab_size = V;
  s.model_tag = "random";
  for (int n = 0; n < N; ++n) {
    std::vector<int> order(L);
    for (int i = 0; i < L; ++i) order[i] = i;
    order = rng.sample(order, L);
    auto budget = balanced_budget(L, T);
    std::vector<RevealEvent> ev;
    std::size_t k = 0;
    for (int t = 1; t <= T; ++t)
      for (int j = 0; j < budget[t - 1]; ++j)
        ev.push_back({t, order[k++], static_cast<TokenId>(rng.bounded(V)), rng.uniform()});
    s.chains.push_back(replay(n, L, T, ev));
  }
  return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("oscar_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_all(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace testing_support

#include "oscar/localization.hpp"
#include "oscar/synthetic.hpp"

namespace testing_support {

// Entry with explicit base distributions {gold: pg, distractor: 1-pg} per position.
inline KnowledgeEntry hand_entry(const std::string& id, const std::vector<double>& pg, std::vector<Coupling> couplings = {}) {
  KnowledgeEntry e;
  e.query_id = id;
  e.seed = 1;
  const int L = static_cast<int>(pg.size());
  for (int i = 0; i < L; ++i) {
    e.gold.push_back(10 + i);
    e.distractor.push_back(40 + i);
    e.base.push_back({{10 + i, pg[i]}, {40 + i, 1.0 - pg[i]}});
    const bool cbw = pg[i] < 0.05;
    e.cls.push_back(cbw ? PositionClass::cbw : pg[i] >= 0.95 ? PositionClass::stable : PositionClass::uncertain);
    e.prone.push_back(pg[i] < 0.95);
  }
  e.couplings = std::move(couplings);
  return e;
}

// No background head, so distributions are exactly the world's.
inline SyntheticCorpus hand_corpus(std::vector<KnowledgeEntry> entries, std::int64_t V = 100) {
  SyntheticCorpus c;
  c.vocab.size = V;
  c.vocab.mask_id = 0;
  c.vocab.pad_id = 1;
  c.length = entries.empty() ? 0 : entries[0].length();
  c.background_mass = 0.0;
  c.top_k = 8;
  c.entries = std::move(entries);
  c.reindex();
  return c;
}

}  // namespace testing_support

namespace testing_support {

// Set whose chain n ends in finals[n]; one step, events in position order.
inline TrajectorySet set_from_finals(const std::vector<std::vector<TokenId>>& finals, std::int64_t V = 1000) {
  TrajectorySet s;
  const int L = static_cast<int>(finals.at(0).size());
  s.query_id = "q";
  s.config.length = L;
  s.config.steps = 1;
  s.config.chains = static_cast<int>(finals.size());
  s.vocab_size = V;
  for (std::size_t n = 0; n < finals.size(); ++n) {
    std::vector<RevealEvent> ev;
    for (int i = 0; i < L; ++i) ev.push_back({1, i, finals[n][i], 0.5});
    s.chains.push_back(replay(static_cast<int>(n), L, 1, ev));
  }
  return s;
}

// Profile carrying just the given entropies.
inline EntropyProfile profile_of(const std::vector<double>& h) {
  EntropyProfile p;
  p.chains = 8;
  p.length = static_cast<int>(h.size());
  p.entropy = h;
  p.counts.assign(h.size(), {});
  return p;
}

}  // namespace testing_support
