#pragma once

// HTTP+JSON client for an external model server.
//
//   GET  /info           {"proto_version":1, "vocab_size", "mask_id", "recommended_T",
//                         "model_tag", "max_length", "supports_evidence", "supports_batch"}
//   POST /denoise        {"proto_version":1, "query", "tokens":[id|null], "evidence":str|null, "top_k"}
//                     -> {"proto_version":1, "distributions":[{"i", "top":[[tok, p], ...]}, ...]}
//   POST /denoise_batch  {"proto_version":1, "requests":[...]} -> {"proto_version":1, "responses":[...]}
//
// Errors come back as 4xx/5xx with {"error": message}.

#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "oscar/denoiser.hpp"

namespace oscar::bridge {

inline constexpr int kProtoVersion = 1;
inline constexpr int kDefaultTopK = 16;
inline constexpr double kSumTolerance = 1e-6;

struct Info {
  std::int64_t vocab_size = 0;
  TokenId mask_id = 0;
  int recommended_T = 0;
  std::string model_tag;
  int max_length = 0;
  bool supports_evidence = false;
  bool supports_batch = false;
};

inline nlohmann::json info_to_json(const Info& i) {
  return {{"proto_version", kProtoVersion}, {"vocab_size", i.vocab_size}, {"mask_id", i.mask_id},
          {"recommended_T", i.recommended_T}, {"model_tag", i.model_tag}, {"max_length", i.max_length},
          {"supports_evidence", i.supports_evidence}, {"supports_batch", i.supports_batch}};
}

inline nlohmann::json request_to_json(const DenoiseRequest& r, int top_k = kDefaultTopK) {
  nlohmann::json toks = nlohmann::json::array();
  for (auto t : r.tokens) toks.push_back(t == kMasked ? nlohmann::json(nullptr) : nlohmann::json(t));
  return {{"proto_version", kProtoVersion}, {"query", r.query}, {"tokens", toks},
          {"evidence", r.evidence.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.evidence)}, {"top_k", top_k}};
}

inline nlohmann::json response_to_json(const DenoiseResponse& resp) {
  nlohmann::json d = nlohmann::json::array();
  for (auto& pd : resp) {
    nlohmann::json top = nlohmann::json::array();
    for (auto& tp : pd.probs) top.push_back({tp.tok, tp.p});
    d.push_back({{"i", pd.i}, {"top", top}});
  }
  return {{"proto_version", kProtoVersion}, {"distributions", d}};
}

// Schema problems in a request document; empty = valid.
inline std::vector<std::string> validate_request(const nlohmann::json& j) {
  std::vector<std::string> e;
  if (!j.is_object()) return {"request is not an object"};
  if (!j.contains("proto_version") || !j["proto_version"].is_number_integer()) e.push_back("proto_version missing");
  else if (j["proto_version"] != kProtoVersion) e.push_back("unsupported proto_version");
  if (!j.contains("query") || !j["query"].is_string()) e.push_back("query must be a string");
  if (!j.contains("tokens") || !j["tokens"].is_array()) e.push_back("tokens must be an array");
  else
    for (auto& t : j["tokens"])
      if (!t.is_null() && !(t.is_number_integer() && t.get<std::int64_t>() >= 0)) {
        e.push_back("tokens entries must be null or non-negative integers");
        break;
      }
  if (j.contains("evidence") && !j["evidence"].is_null() && !j["evidence"].is_string()) e.push_back("evidence must be string or null");
  if (j.contains("top_k") && !(j["top_k"].is_number_integer() && j["top_k"].get<int>() >= 1)) e.push_back("top_k must be >= 1");
  return e;
}

// Schema and content problems in a response to `req`; empty = valid.
inline std::vector<std::string> validate_response(const nlohmann::json& j, const nlohmann::json& req, std::int64_t vocab_size) {
  std::vector<std::string> e;
  if (!j.is_object()) return {"response is not an object"};
  if (!j.contains("proto_version") || j["proto_version"] != kProtoVersion) e.push_back("proto_version missing or unsupported");
  if (!j.contains("distributions") || !j["distributions"].is_array()) {
    e.push_back("distributions must be an array");
    return e;
  }
  std::vector<int> masked;
  const auto& toks = req.at("tokens");
  for (std::size_t i = 0; i < toks.size(); ++i)
    if (toks[i].is_null()) masked.push_back(static_cast<int>(i));
  const auto& d = j["distributions"];
  if (d.size() != masked.size()) e.push_back("distributions do not cover exactly the masked positions");
  for (std::size_t k = 0; k < d.size(); ++k) {
    const auto& pd = d[k];
    if (!pd.is_object() || !pd.contains("i") || !pd["i"].is_number_integer() || !pd.contains("top") || !pd["top"].is_array()) {
      e.push_back("distribution entry " + std::to_string(k) + " malformed");
      continue;
    }
    int i = pd["i"].get<int>();
    if (k < masked.size() && masked[k] != i) e.push_back("distribution for position " + std::to_string(i) + " out of order or not masked");
    if (pd["top"].empty()) e.push_back("empty distribution at position " + std::to_string(i));
    double sum = 0;
    for (auto& tp : pd["top"]) {
      if (!tp.is_array() || tp.size() != 2 || !tp[0].is_number_integer() || !tp[1].is_number()) {
        e.push_back("entry at position " + std::to_string(i) + " is not [token, prob]");
        break;
      }
      auto tok = tp[0].get<std::int64_t>();
      double p = tp[1].get<double>();
      if (tok < 0 || tok >= vocab_size) e.push_back("token id out of range at position " + std::to_string(i));
      if (p < 0) e.push_back("negative probability at position " + std::to_string(i));
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) e.push_back("probabilities at position " + std::to_string(i) + " do not sum to 1");
  }
  return e;
}

inline DenoiseRequest request_from_json(const nlohmann::json& j) {
  DenoiseRequest r;
  r.query = j.at("query").get<std::string>();
  for (auto& t : j.at("tokens")) r.tokens.push_back(t.is_null() ? kMasked : t.get<TokenId>());
  if (j.contains("evidence") && j["evidence"].is_string()) r.evidence = j["evidence"].get<std::string>();
  return r;
}

inline DenoiseResponse response_from_json(const nlohmann::json& j) {
  DenoiseResponse out;
  for (auto& pd : j.at("distributions")) {
    PositionDist d;
    d.i = pd.at("i").get<int>();
    for (auto& tp : pd.at("top")) d.probs.push_back({tp.at(0).get<TokenId>(), tp.at(1).get<double>()});
    out.push_back(std::move(d));
  }
  return out;
}

// Denoiser backed by a remote model server.
class BridgeDenoiser : public Denoiser {
 public:
  explicit BridgeDenoiser(const std::string& url, int top_k = kDefaultTopK) : cli_(url), top_k_(top_k) {
    cli_.set_connection_timeout(5);
    cli_.set_read_timeout(120);
    auto res = cli_.Get("/info");
    if (!res) throw DenoiserError("bridge unreachable at " + url + ": " + httplib::to_string(res.error()));
    auto j = parse(res->status, res->body, "/info");
    try {
      if (j.at("proto_version").get<int>() != kProtoVersion) throw DenoiserError("bridge speaks proto_version " + j["proto_version"].dump());
      info_.vocab_size = j.at("vocab_size").get<std::int64_t>();
      info_.mask_id = j.at("mask_id").get<TokenId>();
      info_.recommended_T = j.value("recommended_T", 0);
      info_.model_tag = j.value("model_tag", std::string("bridge"));
      info_.max_length = j.value("max_length", 0);
      info_.supports_evidence = j.value("supports_evidence", false);
      info_.supports_batch = j.value("supports_batch", false);
    } catch (const nlohmann::json::exception& e) {
      throw DenoiserError(std::string("bridge /info malformed: ") + e.what());
    }
  }

  DenoiseResponse denoise(const DenoiseRequest& req) override {
    auto body = request_to_json(req, top_k_);
    auto res = cli_.Post("/denoise", body.dump(), "application/json");
    if (!res) throw DenoiserError("bridge /denoise failed: " + httplib::to_string(res.error()));
    return decode(parse(res->status, res->body, "/denoise"), body);
  }

  std::vector<DenoiseResponse> denoise_batch(std::span<const DenoiseRequest> reqs) override {
    if (!info_.supports_batch) return Denoiser::denoise_batch(reqs);
    nlohmann::json list = nlohmann::json::array();
    for (auto& r : reqs) list.push_back(request_to_json(r, top_k_));
    nlohmann::json body{{"proto_version", kProtoVersion}, {"requests", list}};
    auto res = cli_.Post("/denoise_batch", body.dump(), "application/json");
    if (!res) throw DenoiserError("bridge /denoise_batch failed: " + httplib::to_string(res.error()));
    auto j = parse(res->status, res->body, "/denoise_batch");
    if (!j.contains("responses") || !j["responses"].is_array() || j["responses"].size() != reqs.size())
      throw DenoiserError("bridge /denoise_batch returned the wrong number of responses");
    std::vector<DenoiseResponse> out;
    for (std::size_t k = 0; k < reqs.size(); ++k) {
      auto r = j["responses"][k];
      if (!r.contains("proto_version")) r["proto_version"] = kProtoVersion;
      out.push_back(decode(r, list[k]));
    }
    return out;
  }

  bool concurrent_safe() const override { return false; }
  std::int64_t vocab_size() const override { return info_.vocab_size; }
  TokenId mask_id() const override { return info_.mask_id; }
  std::string model_tag() const override { return info_.model_tag; }
  double tolerance() const override { return kSumTolerance; }
  const Info& info() const { return info_; }

 private:
  static nlohmann::json parse(int status, const std::string& body, const char* where) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      throw DenoiserError(std::string("bridge ") + where + ": HTTP " + std::to_string(status) + ", body is not JSON");
    }
    if (status != 200) {
      std::string msg = j.is_object() && j.contains("error") ? j["error"].dump() : body;
      throw DenoiserError(std::string("bridge ") + where + ": HTTP " + std::to_string(status) + " " + msg);
    }
    return j;
  }

  DenoiseResponse decode(const nlohmann::json& j, const nlohmann::json& req) const {
    auto errs = validate_response(j, req, info_.vocab_size);
    if (!errs.empty()) throw DenoiserError("bridge response invalid: " + errs.front());
    return response_from_json(j);
  }

  httplib::Client cli_;
  int top_k_;
  Info info_;
};

}  // namespace oscar::bridge
