#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lclip/dual_encoder.hpp"
#include "lclip/sha256.hpp"
#include "lclip/tensor.hpp"
#include "lclip/tokenizer.hpp"

namespace lclip {

struct MetricConfig {
  double w = 2.5;
  // Sensitivity-analysis flag: also scale the reference term by w. Off by
  // default; the image term alone carries the rescaling weight.
  bool symmetric_scaling = false;
};

namespace detail {

template <class T>
void check_normalized(const TensorT<T>& v, const char* who) {
  if (std::abs(v.norm2() - 1.0) > 1e-3)
    throw ContractError(std::string(who) + ": embedding is not L2-normalized (norm " +
                        std::to_string(v.norm2()) + ")");
}

}  // namespace detail

// w * max(cos(v0, u0), 0) on normalized embeddings.
template <class T>
double l_clipscore(const TensorT<T>& v0, const TensorT<T>& u0, double w = 2.5) {
  detail::check_normalized(v0, "l_clipscore(v0)");
  detail::check_normalized(u0, "l_clipscore(u0)");
  return w * std::max(cosine_sim(v0, u0), 0.0);
}

inline double harmonic_mean(double a, double b) {
  if (a < 0 || b < 0) throw DomainError("harmonic_mean: negative input");
  if (a + b == 0) return 0.0;
  return 2.0 * a * b / (a + b);
}

// HM of the w-scaled image score and the best reference cosine (unscaled by
// default; the asymmetry is deliberate).
template <class T>
double ref_l_clipscore(const TensorT<T>& u0, const std::vector<TensorT<T>>& refs,
                       const TensorT<T>& v0, const MetricConfig& cfg = {}) {
  if (refs.empty()) throw PreconditionError("ref_l_clipscore: empty reference list");
  detail::check_normalized(u0, "ref_l_clipscore(u0)");
  double best = 0.0;
  for (const auto& r : refs) {
    detail::check_normalized(r, "ref_l_clipscore(ref)");
    best = std::max(best, cosine_sim(u0, r));
  }
  best = std::max(best, 0.0);
  if (cfg.symmetric_scaling) best *= cfg.w;
  return harmonic_mean(l_clipscore(v0, u0, cfg.w), best);
}

// ---------------------------------------------------------------------------
// Batch scoring with content-addressed embedding caching
// ---------------------------------------------------------------------------

struct ScoreRecord {
  std::string pair_id;
  double l_clipscore = 0;
  std::optional<double> ref_l_clipscore;
  double w = 2.5;
};

struct ScoreRequest {
  std::string id;
  Tensor patches;
  std::string candidate;
  std::vector<std::string> refs;
};

struct BatchScoreResult {
  std::vector<ScoreRecord> records;                       // order-preserving
  std::vector<std::pair<std::size_t, std::string>> errors;  // (input index, message)
  long cache_hits = 0;
  long cache_misses = 0;
};

// Scores a stream of (image, candidate, refs?) requests. Each unique image or
// caption is embedded once; failures are collected per record and the run
// continues.
template <class T>
class BatchScorer {
public:
  BatchScorer(const DualEncoderT<T>& enc, const Vocabulary& vocab, MetricConfig cfg = {})
      : enc_(enc), vocab_(vocab), cfg_(cfg) {}

  BatchScoreResult score(const std::vector<ScoreRequest>& requests) {
    BatchScoreResult out;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto& req = requests[i];
      try {
        const TensorT<T> v0 = image_embedding(req.patches);
        const TensorT<T> u0 = text_embedding(req.candidate);
        ScoreRecord rec;
        rec.pair_id = req.id;
        rec.w = cfg_.w;
        rec.l_clipscore = l_clipscore(v0, u0, cfg_.w);
        if (!req.refs.empty()) {
          std::vector<TensorT<T>> ref_embs;
          for (const auto& r : req.refs) ref_embs.push_back(text_embedding(r));
          rec.ref_l_clipscore = ref_l_clipscore(u0, ref_embs, v0, cfg_);
        }
        out.records.push_back(std::move(rec));
      } catch (const Error& e) {
        out.errors.emplace_back(i, e.what());
      }
    }
    out.cache_hits = hits_;
    out.cache_misses = misses_;
    return out;
  }

  const TensorT<T>& image_embedding(const Tensor& patches) {
    const std::string key = "img:" + sha256_hex(patches.vec());
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ++hits_;
      return it->second;
    }
    ++misses_;
    return cache_.emplace(key, enc_.encode_image(patches.template cast<T>()).first).first->second;
  }

  const TensorT<T>& text_embedding(const std::string& text) {
    const std::string key = "txt:" + sha256_hex(text);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ++hits_;
      return it->second;
    }
    ++misses_;
    return cache_.emplace(key, enc_.encode_text(vocab_.encode(text)).first).first->second;
  }

private:
  const DualEncoderT<T>& enc_;
  const Vocabulary& vocab_;
  MetricConfig cfg_;
  std::unordered_map<std::string, TensorT<T>> cache_;
  long hits_ = 0, misses_ = 0;
};

}  // namespace lclip
