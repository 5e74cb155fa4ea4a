#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lclip/error.hpp"
#include "lclip/rng.hpp"

namespace lclip {

struct RatingRecord {
  std::string pair_id;
  double human_rating = 0;
  double metric_score = 0;
};

enum class PascalCategory { HC, HI, HM, MM };

inline PascalCategory pascal_category_from_string(const std::string& s) {
  if (s == "HC") return PascalCategory::HC;
  if (s == "HI") return PascalCategory::HI;
  if (s == "HM") return PascalCategory::HM;
  if (s == "MM") return PascalCategory::MM;
  throw DataError("unknown Pascal category \"" + s + "\"");
}

inline const char* to_string(PascalCategory c) {
  switch (c) {
    case PascalCategory::HC: return "HC";
    case PascalCategory::HI: return "HI";
    case PascalCategory::HM: return "HM";
    case PascalCategory::MM: return "MM";
  }
  return "?";
}

struct PairRecord {
  std::string image_id;
  std::string caption_a, caption_b;
  PascalCategory category = PascalCategory::HC;
  char human_choice = 'A';  // 'A' | 'B'
  std::vector<std::string> refs;
};

struct FoilRecord {
  std::string image_id;
  std::string true_caption, foil_caption;
  std::vector<std::string> refs;
};

// Scorer contract shared by both harnesses: deterministic score of one
// caption against one image, optionally consulting references.
using CaptionScorer =
    std::function<double(const std::string& image_id, const std::string& caption,
                         std::span<const std::string> refs)>;

struct PascalResult {
  std::map<PascalCategory, double> accuracy;
  std::map<PascalCategory, long> count;
  double mean = 0;  // unweighted over the four categories
  long n = 0;
};

// Per record the metric prefers the higher-scoring caption; exact ties earn
// 0.5 credit, so a constant scorer lands at exactly 50%.
inline PascalResult pascal_accuracy(const std::vector<PairRecord>& pairs,
                                    const CaptionScorer& scorer) {
  PascalResult out;
  std::map<PascalCategory, double> credit;
  for (const auto& rec : pairs) {
    const double sa = scorer(rec.image_id, rec.caption_a, rec.refs);
    const double sb = scorer(rec.image_id, rec.caption_b, rec.refs);
    double c = 0;
    if (sa == sb)
      c = 0.5;
    else if ((sa > sb && rec.human_choice == 'A') || (sb > sa && rec.human_choice == 'B'))
      c = 1.0;
    credit[rec.category] += c;
    ++out.count[rec.category];
    ++out.n;
  }
  double sum = 0;
  int cats = 0;
  for (const auto& [cat, cnt] : out.count) {
    out.accuracy[cat] = credit[cat] / static_cast<double>(cnt);
    sum += out.accuracy[cat];
    ++cats;
  }
  out.mean = cats ? sum / cats : 0.0;
  return out;
}

enum class RefMode { none, one_ref, four_ref };

inline int ref_mode_count(RefMode m) {
  switch (m) {
    case RefMode::none: return 0;
    case RefMode::one_ref: return 1;
    case RefMode::four_ref: return 4;
  }
  return 0;
}

// Fraction of records where the true caption outscores the foil; ties count
// as failures. ref_mode selects the first k references handed to the scorer.
inline double foil_accuracy(const std::vector<FoilRecord>& records, const CaptionScorer& scorer,
                            RefMode ref_mode) {
  if (records.empty()) throw PreconditionError("foil_accuracy: empty record list");
  const int k = ref_mode_count(ref_mode);
  long hits = 0;
  for (const auto& rec : records) {
    if (static_cast<int>(rec.refs.size()) < k)
      throw DataError("foil_accuracy: record for image " + rec.image_id + " has " +
                      std::to_string(rec.refs.size()) + " refs, mode needs " + std::to_string(k));
    std::span<const std::string> refs(rec.refs.data(), static_cast<std::size_t>(k));
    if (scorer(rec.image_id, rec.true_caption, refs) >
        scorer(rec.image_id, rec.foil_caption, refs))
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

// Seeded subsampling utility for reference lists (Pascal-style runs fix k=5).
inline std::vector<std::string> sample_refs(const std::vector<std::string>& refs, std::size_t k,
                                            std::uint64_t seed) {
  if (refs.size() <= k) return refs;
  std::vector<std::size_t> idx(refs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5e1ec7));
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(refs[i]);
  return out;
}

}  // namespace lclip
