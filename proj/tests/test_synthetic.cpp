#include <algorithm>
#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "oscar/engine.hpp"
#include "oscar/localization.hpp"
#include "oscar/synthetic.hpp"
#include "support.hpp"

using namespace oscar;
using testing_support::hand_corpus;
using testing_support::hand_entry;

namespace {

double prob(const Distribution& d, TokenId t) {
  for (auto& tp : d)
    if (tp.tok == t) return tp.p;
  return 0.0;
}

// Engine runs over every reveal permutation (one position per step).
std::vector<std::set<TokenId>> enumerate_orders(const SyntheticCorpus& c, const std::string& qid, const std::string& evidence = {}) {
  SyntheticDenoiser den(c);
  const int L = c.find(qid).length();
  std::vector<int> perm(L);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::set<TokenId>> seen(L);
  GenerationConfig g;
  g.length = L;
  g.steps = L;
  g.chains = 1;
  do {
    auto tr = run_chain(den, {qid, {}}, g, RevealPolicy::fixed(perm), 0, evidence);
    for (int i = 0; i < L; ++i) seen[i].insert(tr.final_tokens[i]);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return seen;
}

}  // namespace

TEST(MakeCorpus, ReproducibleAndSerializable) {
  CorpusSpec s;
  s.size = 5;
  auto a = make_corpus(s), b = make_corpus(s);
  EXPECT_EQ(corpus_to_json(a), corpus_to_json(b));
  EXPECT_EQ(a.entries, b.entries);
  auto r = corpus_from_json(corpus_to_json(a));
  EXPECT_EQ(r.entries, a.entries);
  EXPECT_EQ(r.spec, a.spec);
  EXPECT_EQ(corpus_to_json(r), corpus_to_json(a));
  s.seed = 8;
  EXPECT_NE(corpus_to_json(make_corpus(s)), corpus_to_json(a));
}

TEST(MakeCorpus, ClassMixAndTokens) {
  auto c = make_corpus({.size = 50});
  std::size_t cbw = 0, total = 0;
  for (auto& e : c.entries) {
    std::set<TokenId> toks(e.gold.begin(), e.gold.end());
    toks.insert(e.distractor.begin(), e.distractor.end());
    EXPECT_EQ(toks.size(), 2 * e.gold.size());
    for (int i = 0; i < e.length(); ++i) {
      total++;
      double pg = prob(e.base[i], e.gold[i]), sum = 0;
      for (auto& tp : e.base[i]) sum += tp.p;
      EXPECT_NEAR(sum, 1.0, 1e-12);
      switch (e.cls[i]) {
        case PositionClass::stable: EXPECT_GE(pg, 0.95); break;
        case PositionClass::cbw:
          ++cbw;
          EXPECT_GE(prob(e.base[i], e.distractor[i]), 0.95);
          break;
        case PositionClass::uncertain: EXPECT_TRUE(pg > 0.4 && pg < 0.6) << pg; break;
      }
    }
    // every uncertain position takes part in a coupling
    for (int i = 0; i < e.length(); ++i) {
      if (e.cls[i] != PositionClass::uncertain) continue;
      bool used = false;
      for (auto& cp : e.couplings) used |= cp.anchor == i || cp.target == i;
      EXPECT_TRUE(used);
    }
    for (auto& cp : e.couplings) EXPECT_NE(cp.anchor, cp.target);
  }
  // 10% CBW within one position per query
  EXPECT_LE(std::abs(static_cast<double>(cbw) - 0.1 * total), 1.0 * c.entries.size());
}

TEST(MakeCorpus, InfeasibleMix) {
  EXPECT_THROW(make_corpus({.size = 1, .length = 8}), DataError);  // block of 14 does not fit
  EXPECT_THROW(make_corpus({.size = 1, .length = 4, .vocab_size = 8}), DataError);
  EXPECT_THROW(make_corpus({.size = 1, .length = 32, .cbw_fraction = 0.9}), DataError);
}

TEST(MakeCorpus, AllStableEveryOrderYieldsGold) {
  auto c = make_corpus({.size = 1, .length = 6, .vocab_size = 64, .cbw_fraction = 0.0, .blocks = 0});
  auto lab = label_oracle(c, "q0");
  for (int i = 0; i < 6; ++i) {
    EXPECT_FALSE(lab.order_dependent[i]);
    EXPECT_FALSE(lab.prone[i]);
    EXPECT_EQ(lab.reachable[i], std::set<TokenId>{c.entries[0].gold[i]});
  }
}

TEST(SyntheticDenoise, AllMaskedGivesBase) {
  auto c = hand_corpus({hand_entry("q", {0.97, 0.55, 0.44}, {{2, 1, 0.4, CouplingKind::attract}})});
  SyntheticDenoiser den(c);
  auto r = den.denoise({"q", {kMasked, kMasked, kMasked}, {}});
  ASSERT_EQ(r.size(), 3u);
  auto by_tok = [](Distribution d) {
    std::sort(d.begin(), d.end(), [](auto& a, auto& b) { return a.tok < b.tok; });
    return d;
  };
  for (int i = 0; i < 3; ++i) EXPECT_EQ(by_tok(r[i].probs), by_tok(c.entries[0].base[i]));
}

TEST(SyntheticDenoise, AttractFiresOnlyOnDistractor) {
  auto e = hand_entry("q", {0.97, 0.55, 0.44}, {{2, 1, 0.4, CouplingKind::attract}});
  auto gold = world_distribution(e, 1, {kMasked, kMasked, 12}, {});
  EXPECT_EQ(gold, e.base[1]);
  auto bad = world_distribution(e, 1, {kMasked, kMasked, 42}, {});
  EXPECT_NEAR(prob(bad, 11), 0.15, 1e-12);
  EXPECT_NEAR(prob(bad, 41), 0.85, 1e-12);
}

TEST(SyntheticDenoise, SupportAndAgree) {
  auto e = hand_entry("q", {0.5, 0.5}, {{0, 1, 0.2, CouplingKind::support}});
  EXPECT_NEAR(prob(world_distribution(e, 1, {10, kMasked}, {}), 11), 0.7, 1e-12);
  EXPECT_EQ(world_distribution(e, 1, {40, kMasked}, {}), e.base[1]);
  e.couplings[0].kind = CouplingKind::agree;
  EXPECT_NEAR(prob(world_distribution(e, 1, {40, kMasked}, {}), 41), 0.7, 1e-12);
}

TEST(SyntheticDenoise, EvidenceOverridesCouplings) {
  auto e = hand_entry("q", {0.97, 0.55, 0.44}, {{2, 1, 0.4, CouplingKind::attract}});
  auto d = world_distribution(e, 1, {kMasked, kMasked, 42}, parse_evidence("pos=1 gold=11"));
  EXPECT_GE(prob(d, 11), 0.95);
  double sum = 0;
  for (auto& tp : d) sum += tp.p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(SyntheticDenoise, BackgroundHeadKeepsSupportOnTop) {
  auto c = make_corpus({.size = 2});
  SyntheticDenoiser den(c);
  auto& e = c.entries[1];
  std::vector<TokenId> y(32, kMasked);
  auto r = den.denoise({"q1", y, {}});
  for (auto& pd : r) {
    EXPECT_LE(pd.probs.size(), 8u);
    double sum = 0;
    for (auto& tp : pd.probs) sum += tp.p;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    TokenId top = argmax(pd.probs).tok;
    EXPECT_EQ(top, argmax(e.base[pd.i]).tok);
  }
  // batched responses equal single ones
  std::vector<DenoiseRequest> reqs{{"q1", y, {}}, {"q0", y, {}}, {"q1", y, {}}};
  auto b = den.denoise_batch(reqs);
  EXPECT_EQ(b[0], r);
  EXPECT_EQ(b[2], r);
  EXPECT_EQ(b[1], den.denoise(reqs[1]));
  EXPECT_THROW(den.denoise({"nope", y, {}}), DenoiserError);
}

TEST(LabelOracle, AnchorWithoutIncomingCouplingIsOrderInvariant) {
  // misled anchor (argmax = distractor) pulls the target only when revealed first
  auto c = hand_corpus({hand_entry("q", {0.44, 0.55}, {{0, 1, 1.0, CouplingKind::attract}})});
  auto lab = label_oracle(c, "q");
  EXPECT_FALSE(lab.order_dependent[0]);
  EXPECT_EQ(lab.reachable[0], std::set<TokenId>{40});
  EXPECT_TRUE(lab.order_dependent[1]);
  EXPECT_TRUE(lab.prone[1]);
  EXPECT_EQ(lab.reachable[1], (std::set<TokenId>{11, 41}));
  EXPECT_EQ(lab.reachable[1], enumerate_orders(c, "q")[1]);
}

TEST(LabelOracle, MutualCouplingIsOrderDependent) {
  auto c = hand_corpus({hand_entry("q", {0.44, 0.55}, {{0, 1, 0.3, CouplingKind::agree}, {1, 0, 0.3, CouplingKind::agree}})});
  auto lab = label_oracle(c, "q");
  EXPECT_TRUE(lab.order_dependent[0]);
  EXPECT_TRUE(lab.order_dependent[1]);
  EXPECT_EQ(lab.reachable[0], (std::set<TokenId>{10, 40}));
  EXPECT_EQ(lab.reachable[1], (std::set<TokenId>{11, 41}));
  EXPECT_EQ(lab.finals, 2u);
}

TEST(LabelOracle, TooLong) {
  auto c = make_corpus({.size = 1});
  EXPECT_THROW(label_oracle(c, "q0"), DataError);
}

TEST(LabelOracle, AgreesWithPermutationEnumeration) {
  // small generated layouts: one block with gap 0, cores of 2
  CorpusSpec s{.size = 12, .length = 7, .vocab_size = 64, .cbw_fraction = 1.0 / 7, .main_core = 2, .main_seeds = 1,
               .gap = 0, .weak_core = 2, .weak_seeds = 1};
  auto c = make_corpus(s);
  int dependent = 0;
  for (auto& e : c.entries) {
    auto lab = label_oracle(c, e.query_id);
    auto seen = enumerate_orders(c, e.query_id);
    for (int i = 0; i < e.length(); ++i) {
      EXPECT_EQ(lab.reachable[i], seen[i]) << e.query_id << " position " << i;
      EXPECT_EQ(lab.order_dependent[i], seen[i].size() >= 2);
      dependent += lab.order_dependent[i];
      if (e.cls[i] == PositionClass::cbw) {
        EXPECT_EQ(lab.reachable[i].size(), 1u);
        EXPECT_NE(*lab.reachable[i].begin(), e.gold[i]);
      }
      if (e.cls[i] == PositionClass::stable) EXPECT_FALSE(lab.prone[i]);
    }
  }
  EXPECT_GT(dependent, 0);
}

TEST(LabelOracle, EvidenceMakesEveryOrderGold) {
  auto c = hand_corpus({hand_entry("q", {0.44, 0.55}, {{0, 1, 0.3, CouplingKind::agree}, {1, 0, 0.3, CouplingKind::agree}})});
  auto lab = label_oracle(c, "q", {}, "pos=0 gold=10");
  EXPECT_EQ(lab.reachable[0], std::set<TokenId>{10});
  EXPECT_EQ(enumerate_orders(c, "q", "pos=0 gold=10")[0], std::set<TokenId>{10});
}

TEST(CorpusJson, RejectsBadDocuments) {
  EXPECT_THROW(corpus_from_json("{}"), DataError);
  EXPECT_THROW(corpus_from_json("not json"), DataError);
  auto text = corpus_to_json(make_corpus({.size = 1}));
  auto v2 = text;
  v2.replace(v2.find("\"version\": 1"), 12, "\"version\": 2");
  EXPECT_THROW(corpus_from_json(v2), DataError);
}
