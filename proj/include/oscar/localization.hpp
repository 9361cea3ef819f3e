#pragma once

// Cross-chain entropy, quantile thresholding, span aggregation, base chain.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <vector>

#include "oscar/core.hpp"

namespace oscar {

// Entropy (nats) of a column of tokens; kMasked counts as its own symbol.
// Counts are accumulated in ascending token order so every caller that
// feeds the same column gets the same bits.
inline double column_entropy(std::vector<TokenId> column) {
  const double n = static_cast<double>(column.size());
  if (column.empty()) return 0.0;
  std::sort(column.begin(), column.end());
  double h = 0.0;
  std::size_t a = 0;
  while (a < column.size()) {
    std::size_t b = a;
    while (b < column.size() && column[b] == column[a]) ++b;
    const double p = static_cast<double>(b - a) / n;
    if (p < 1.0) h -= p * std::log(p);
    a = b;
  }
  return h;
}

struct EntropyProfile {
  int chains = 0;
  int length = 0;
  std::vector<double> entropy;
  std::vector<std::vector<std::pair<TokenId, int>>> counts;  // p_hat_i as (token, count), ascending token

  bool point_mass(int i) const { return counts[i].size() == 1; }
};

inline EntropyProfile cross_chain_entropy(const TrajectorySet& set) {
  EntropyProfile p;
  p.chains = set.size();
  p.length = set.config.length;
  for (int i = 0; i < p.length; ++i) {
    std::vector<TokenId> col;
    col.reserve(set.chains.size());
    for (auto& tr : set.chains) col.push_back(tr.final_tokens[i]);
    p.entropy.push_back(column_entropy(col));
    std::sort(col.begin(), col.end());
    std::vector<std::pair<TokenId, int>> cnt;
    for (auto t : col) {
      if (!cnt.empty() && cnt.back().first == t) cnt.back().second++;
      else cnt.push_back({t, 1});
    }
    p.counts.push_back(std::move(cnt));
  }
  return p;
}

struct UncertainSet {
  double alpha = 0.2;
  double threshold = 0.0;
  std::vector<int> flagged;  // ascending
};

// Nearest-rank (1-alpha) quantile, strict exceedance.
inline UncertainSet localize(const EntropyProfile& prof, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha must be in (0,1)");
  UncertainSet u;
  u.alpha = alpha;
  const int L = static_cast<int>(prof.entropy.size());
  if (L == 0) return u;
  std::vector<double> s = prof.entropy;
  std::sort(s.begin(), s.end());
  // the 1e-9 guards ceil against (1-alpha)*L landing a hair above an integer
  int rank = static_cast<int>(std::ceil((1.0 - alpha) * L - 1e-9));
  rank = std::clamp(rank, 1, L);
  u.threshold = s[rank - 1];
  for (int i = 0; i < L; ++i)
    if (prof.entropy[i] > u.threshold) u.flagged.push_back(i);
  return u;
}

enum class SpanOrigin { raw, extended, merged };

inline const char* origin_name(SpanOrigin o) {
  switch (o) {
    case SpanOrigin::raw: return "raw";
    case SpanOrigin::extended: return "extended";
    case SpanOrigin::merged: return "merged";
  }
  return "?";
}

struct Span {
  int a = 0;
  int b = 0;  // inclusive
  SpanOrigin origin = SpanOrigin::raw;
  int size() const { return b - a + 1; }
  bool contains(int i) const { return a <= i && i <= b; }
  bool operator==(const Span&) const = default;
};

struct SpanSet {
  std::vector<Span> spans;
  int window = 2;
  int min_length = 3;

  int covered() const {
    int n = 0;
    for (auto& s : spans) n += s.size();
    return n;
  }
  // index of the span holding position i, or -1
  int span_of(int i) const {
    for (std::size_t k = 0; k < spans.size(); ++k)
      if (spans[k].contains(i)) return static_cast<int>(k);
    return -1;
  }
};

// Merge overlapping or adjacent spans of a sorted-by-start list.
inline std::vector<Span> merge_spans(std::vector<Span> in) {
  std::sort(in.begin(), in.end(), [](auto& x, auto& y) { return x.a < y.a; });
  std::vector<Span> out;
  for (auto& s : in) {
    if (!out.empty() && s.a <= out.back().b + 1) {
      out.back().b = std::max(out.back().b, s.b);
      out.back().origin = SpanOrigin::merged;
    } else {
      out.push_back(s);
    }
  }
  return out;
}

inline SpanSet aggregate_spans(const std::vector<int>& flagged, int w, int min_len, int L) {
  if (w < 0 || min_len < 1) throw DataError("aggregate_spans: need w >= 0 and min length >= 1");
  SpanSet out;
  out.window = w;
  out.min_length = min_len;
  std::vector<int> f = flagged;
  std::sort(f.begin(), f.end());
  std::vector<Span> raw;
  for (int i : f) {
    if (!raw.empty() && raw.back().b == i - 1) raw.back().b = i;
    else if (raw.empty() || raw.back().b < i) raw.push_back({i, i, SpanOrigin::raw});
  }
  std::vector<Span> ext;
  for (auto s : raw) {
    if (s.size() < min_len) continue;  // filtered before extension
    Span e{std::max(0, s.a - w), std::min(L - 1, s.b + w), SpanOrigin::raw};
    if (e.a != s.a || e.b != s.b) e.origin = SpanOrigin::extended;
    ext.push_back(e);
  }
  out.spans = merge_spans(std::move(ext));
  return out;
}

inline SpanSet aggregate_spans(const UncertainSet& u, int w, int min_len, int L) {
  return aggregate_spans(u.flagged, w, min_len, L);
}

// Consensus score of chain n as an integer: sum_i count_i(y_i^n). Dividing by N
// is a common factor, so comparisons stay exact.
inline std::int64_t consensus_count(const TrajectorySet& set, const EntropyProfile& prof, int n) {
  std::int64_t s = 0;
  for (int i = 0; i < prof.length; ++i) {
    TokenId t = set.chains[n].final_tokens[i];
    for (auto& [tok, c] : prof.counts[i])
      if (tok == t) s += c;
  }
  return s;
}

inline int select_base_chain(const TrajectorySet& set, const EntropyProfile& prof) {
  if (set.chains.empty()) throw DataError("select_base_chain: empty set");
  int best = 0;
  std::int64_t best_s = -1;
  for (int n = 0; n < set.size(); ++n) {
    std::int64_t s = consensus_count(set, prof, n);
    if (s > best_s) {
      best_s = s;
      best = n;
    }
  }
  return best;
}

inline std::vector<TokenId> majority_vote(const TrajectorySet& set) {
  if (set.chains.empty()) throw DataError("majority_vote: empty set");
  auto prof = cross_chain_entropy(set);
  std::vector<TokenId> out;
  for (int i = 0; i < prof.length; ++i) {
    TokenId best = kNoToken;
    int best_c = 0;
    for (auto& [tok, c] : prof.counts[i])  // ascending token, so strict > keeps the lowest id on ties
      if (c > best_c) {
        best_c = c;
        best = tok;
      }
    out.push_back(best);
  }
  return out;
}

// position,entropy,flagged,span_id
inline void write_entropy_csv(std::ostream& os, const EntropyProfile& prof, const UncertainSet& u, const SpanSet& spans) {
  os << "position,entropy,flagged,span_id\n";
  std::vector<bool> flag(prof.length, false);
  for (int i : u.flagged) flag[i] = true;
  char buf[64];
  for (int i = 0; i < prof.length; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", prof.entropy[i]);
    os << i << ',' << buf << ',' << (flag[i] ? 1 : 0) << ',' << spans.span_of(i) << '\n';
  }
}

// span_id,start,end,origin
inline void write_spans_csv(std::ostream& os, const SpanSet& spans) {
  os << "span_id,start,end,origin\n";
  for (std::size_t k = 0; k < spans.spans.size(); ++k)
    os << k << ',' << spans.spans[k].a << ',' << spans.spans[k].b << ',' << origin_name(spans.spans[k].origin) << '\n';
}

}  // namespace oscar
