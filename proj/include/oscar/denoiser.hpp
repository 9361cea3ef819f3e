#pragma once

// The denoiser contract: given (query, partial state, evidence) return a
// categorical distribution for every masked position. Deterministic.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "oscar/core.hpp"

namespace oscar {

struct TokenProb {
  TokenId tok = 0;
  double p = 0.0;
  bool operator==(const TokenProb&) const = default;
};

using Distribution = std::vector<TokenProb>;

struct PositionDist {
  int i = 0;
  Distribution probs;
  bool operator==(const PositionDist&) const = default;
};

// One entry per masked position, ascending by position.
using DenoiseResponse = std::vector<PositionDist>;

struct DenoiseRequest {
  std::string query;
  std::vector<TokenId> tokens;  // kMasked marks masked positions
  std::string evidence;         // empty = none
};

// What a model sees as its prompt: [evidence; query].
inline std::string conditioning_text(const DenoiseRequest& r) {
  return r.evidence.empty() ? r.query : r.evidence + "\n" + r.query;
}

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual DenoiseResponse denoise(const DenoiseRequest& req) = 0;

  // Several chains' states in one evaluation. Default: one call each.
  virtual std::vector<DenoiseResponse> denoise_batch(std::span<const DenoiseRequest> reqs) {
    std::vector<DenoiseResponse> out;
    out.reserve(reqs.size());
    for (auto& r : reqs) out.push_back(denoise(r));
    return out;
  }

  // false = engine must not call concurrently
  virtual bool concurrent_safe() const { return true; }

  virtual std::int64_t vocab_size() const = 0;
  virtual TokenId mask_id() const = 0;
  virtual std::string model_tag() const = 0;

  // allowed |sum - 1| per position
  virtual double tolerance() const { return 1e-9; }
};

// (token, prob) with the highest probability; ties to the lowest token id.
inline TokenProb argmax(const Distribution& d) {
  TokenProb best{kNoToken, -1.0};
  for (auto& tp : d) {
    if (tp.p > best.p || (tp.p == best.p && tp.tok < best.tok)) best = tp;
  }
  return best;
}

// Throws DenoiserError naming the offending position.
inline void check_response(const DenoiseRequest& req, const DenoiseResponse& resp, std::int64_t vocab_size,
                           double tol = 1e-9) {
  std::size_t k = 0;
  for (int i = 0; i < static_cast<int>(req.tokens.size()); ++i) {
    if (req.tokens[i] != kMasked) continue;
    if (k >= resp.size() || resp[k].i != i)
      throw DenoiserError("no distribution for masked position " + std::to_string(i));
    const auto& d = resp[k].probs;
    if (d.empty()) throw DenoiserError("empty distribution at position " + std::to_string(i));
    double sum = 0.0;
    for (auto& tp : d) {
      if (tp.tok < 0 || tp.tok >= vocab_size)
        throw DenoiserError("token " + std::to_string(tp.tok) + " outside vocabulary at position " + std::to_string(i));
      if (!(tp.p >= 0.0) || !std::isfinite(tp.p))
        throw DenoiserError("negative or non-finite probability at position " + std::to_string(i));
      sum += tp.p;
    }
    if (std::abs(sum - 1.0) > tol)
      throw DenoiserError("probabilities at position " + std::to_string(i) + " sum to " + std::to_string(sum));
    ++k;
  }
  if (k != resp.size()) throw DenoiserError("distribution returned for a committed position");
}

// Counts calls; used to audit the no-op guarantee.
class CountingDenoiser : public Denoiser {
 public:
  explicit CountingDenoiser(Denoiser& inner) : inner_(inner) {}

  DenoiseResponse denoise(const DenoiseRequest& req) override {
    ++calls;
    ++sequences;
    return inner_.denoise(req);
  }
  std::vector<DenoiseResponse> denoise_batch(std::span<const DenoiseRequest> reqs) override {
    ++calls;
    sequences += reqs.size();
    return inner_.denoise_batch(reqs);
  }
  bool concurrent_safe() const override { return false; }
  std::int64_t vocab_size() const override { return inner_.vocab_size(); }
  TokenId mask_id() const override { return inner_.mask_id(); }
  std::string model_tag() const override { return inner_.model_tag(); }
  double tolerance() const override { return inner_.tolerance(); }

  std::size_t calls = 0;
  std::size_t sequences = 0;

 private:
  Denoiser& inner_;
};

}  // namespace oscar
