#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lclip/error.hpp"
#include "lclip/tokenizer.hpp"

namespace lclip {

// CIDEr-D: clipped TF-IDF n-gram cosine per order 1..4, Gaussian length
// penalty (sigma 6), averaged over orders and references, scaled by 10.

using NGramKey = std::string;  // tokens joined with 0x1e

inline NGramKey ngram_key(const std::vector<std::string>& tokens, std::size_t at, int n) {
  NGramKey key;
  for (int i = 0; i < n; ++i) {
    if (i) key.push_back('\x1e');
    key += tokens[at + static_cast<std::size_t>(i)];
  }
  return key;
}

struct NGramCounts {
  int n = 1;
  std::unordered_map<NGramKey, long> counts;
  long total = 0;  // == max(0, len - n + 1)
};

inline NGramCounts extract_ngrams(const std::vector<std::string>& tokens, int n) {
  if (n < 1 || n > 4) throw PreconditionError("extract_ngrams: n must be in [1,4]");
  NGramCounts out;
  out.n = n;
  if (static_cast<int>(tokens.size()) >= n) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      ++out.counts[ngram_key(tokens, i, n)];
      ++out.total;
    }
  }
  return out;
}

// Document frequencies over images: an n-gram counts once per image no matter
// how many of that image's references contain it.
struct CorpusIDF {
  long doc_count = 0;
  std::unordered_map<NGramKey, long> df;

  double idf(const NGramKey& g) const {
    auto it = df.find(g);
    const long d = it == df.end() ? 0 : it->second;
    return std::log(static_cast<double>(doc_count) / static_cast<double>(std::max<long>(d, 1)));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["doc_count"] = doc_count;
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : df) m[k] = v;
    j["df"] = m;
    return j;
  }

  static CorpusIDF from_json(const nlohmann::json& j) {
    CorpusIDF out;
    out.doc_count = j.at("doc_count").get<long>();
    for (auto it = j.at("df").begin(); it != j.at("df").end(); ++it)
      out.df[it.key()] = it.value().get<long>();
    return out;
  }
};

inline CorpusIDF build_idf(const std::vector<std::vector<std::vector<std::string>>>& reference_corpus) {
  if (reference_corpus.empty()) throw PreconditionError("build_idf: empty corpus");
  CorpusIDF out;
  out.doc_count = static_cast<long>(reference_corpus.size());
  for (const auto& refs : reference_corpus) {
    std::unordered_map<NGramKey, bool> seen;
    for (const auto& ref : refs)
      for (int n = 1; n <= 4; ++n) {
        if (static_cast<int>(ref.size()) < n) continue;
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= ref.size(); ++i)
          seen[ngram_key(ref, i, n)] = true;
      }
    for (const auto& [g, _] : seen) ++out.df[g];
  }
  return out;
}

namespace detail {

struct TfIdfVec {
  std::unordered_map<NGramKey, double> v[4];
  double norm[4] = {0, 0, 0, 0};
  long length = 0;
};

inline TfIdfVec tfidf_of(const std::vector<std::string>& tokens, const CorpusIDF& idf) {
  TfIdfVec out;
  out.length = static_cast<long>(tokens.size());
  for (int n = 1; n <= 4; ++n) {
    const NGramCounts counts = extract_ngrams(tokens, n);
    auto& vec = out.v[n - 1];
    for (const auto& [g, c] : counts.counts) {
      const double x = static_cast<double>(c) * idf.idf(g);
      vec[g] = x;
      out.norm[n - 1] += x * x;
    }
    out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
  }
  return out;
}

}  // namespace detail

inline double cider_d(const std::vector<std::string>& candidate,
                      const std::vector<std::vector<std::string>>& refs, const CorpusIDF& idf,
                      double sigma = 6.0) {
  if (refs.empty()) throw PreconditionError("cider_d: empty reference list");
  if (candidate.empty()) return 0.0;
  const detail::TfIdfVec hyp = detail::tfidf_of(candidate, idf);
  double score = 0.0;
  for (const auto& ref : refs) {
    const detail::TfIdfVec rv = detail::tfidf_of(ref, idf);
    const double delta = static_cast<double>(hyp.length - rv.length);
    const double penalty = std::exp(-delta * delta / (2.0 * sigma * sigma));
    for (int n = 0; n < 4; ++n) {
      double num = 0.0;
      for (const auto& [g, hv] : hyp.v[n]) {
        auto it = rv.v[n].find(g);
        if (it != rv.v[n].end()) num += std::min(hv, it->second) * it->second;
      }
      double val = 0.0;
      if (hyp.norm[n] > 0 && rv.norm[n] > 0) val = num / (hyp.norm[n] * rv.norm[n]);
      score += val * penalty;
    }
  }
  return 10.0 * score / (4.0 * static_cast<double>(refs.size()));
}

inline double cider_d_text(const std::string& candidate, const std::vector<std::string>& refs,
                           const CorpusIDF& idf, double sigma = 6.0) {
  std::vector<std::vector<std::string>> ref_tokens;
  for (const auto& r : refs) ref_tokens.push_back(split_words(r));
  return cider_d(split_words(candidate), ref_tokens, idf, sigma);
}

inline CorpusIDF build_idf_text(const std::vector<std::vector<std::string>>& image_refs) {
  std::vector<std::vector<std::vector<std::string>>> corpus;
  for (const auto& refs : image_refs) {
    std::vector<std::vector<std::string>> toks;
    for (const auto& r : refs) toks.push_back(split_words(r));
    corpus.push_back(std::move(toks));
  }
  return build_idf(corpus);
}

}  // namespace lclip
