#include "lclip/cider.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "lclip/rng.hpp"

using namespace lclip;

namespace {

std::vector<std::string> toks(const std::string& s) { return split_words(s); }

NGramKey key_of(const std::string& spaced) {
  const auto words = split_words(spaced);
  return ngram_key(words, 0, static_cast<int>(words.size()));
}

}  // namespace

TEST(ExtractNgrams, HandCounts) {
  auto u = extract_ngrams({"a", "b", "a"}, 1);
  EXPECT_EQ(u.counts[key_of("a")], 2);
  EXPECT_EQ(u.counts[key_of("b")], 1);
  EXPECT_EQ(u.total, 3);
  auto b = extract_ngrams({"a", "b", "a"}, 2);
  EXPECT_EQ(b.counts[ngram_key({"a", "b"}, 0, 2)], 1);
  EXPECT_EQ(b.counts[ngram_key({"b", "a"}, 0, 2)], 1);
  EXPECT_EQ(b.total, 2);
  auto empty = extract_ngrams({"a"}, 2);
  EXPECT_TRUE(empty.counts.empty());
  EXPECT_EQ(empty.total, 0);
  EXPECT_THROW(extract_ngrams({"a"}, 5), PreconditionError);
  EXPECT_THROW(extract_ngrams({"a"}, 0), PreconditionError);
}

TEST(ExtractNgrams, WindowCountProperty) {
  Rng rng(5);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<std::string> tokens;
    const std::size_t len = rng.uniform_index(10);
    for (std::size_t i = 0; i < len; ++i)
      tokens.push_back(alphabet[rng.uniform_index(alphabet.size())]);
    for (int n = 1; n <= 4; ++n) {
      const auto counts = extract_ngrams(tokens, n);
      const long expected = std::max<long>(0, static_cast<long>(tokens.size()) - n + 1);
      EXPECT_EQ(counts.total, expected);
      long sum = 0;
      for (const auto& [_, c] : counts.counts) sum += c;
      EXPECT_EQ(sum, expected);
    }
  }
}

TEST(BuildIdf, DocumentFrequencySemantics) {
  EXPECT_THROW(build_idf({}), PreconditionError);
  // One image: every present n-gram has df 1.
  auto idf1 = build_idf_text({{"a red cat"}});
  EXPECT_EQ(idf1.doc_count, 1);
  EXPECT_EQ(idf1.df[key_of("red")], 1);
  // An n-gram in two references of ONE image still counts once.
  auto idf2 = build_idf_text({{"a red cat", "the red cat"}});
  EXPECT_EQ(idf2.df[key_of("red cat")], 1);
  // Across two images it counts twice.
  auto idf3 = build_idf_text({{"a red cat"}, {"red cat runs"}});
  EXPECT_EQ(idf3.df[key_of("red cat")], 2);
}

TEST(BuildIdf, HandFixtureTable) {
  std::ifstream in(std::string(LCLIP_FIXTURE_DIR) + "/cider_hand.json");
  ASSERT_TRUE(in.good());
  nlohmann::json fixture;
  in >> fixture;
  std::vector<std::vector<std::string>> corpus;
  for (const auto& refs : fixture["corpus"]) corpus.push_back(refs.get<std::vector<std::string>>());
  const CorpusIDF idf = build_idf_text(corpus);
  EXPECT_EQ(idf.doc_count, 2);
  std::size_t checked = 0;
  for (auto it = fixture["expected_df"].begin(); it != fixture["expected_df"].end(); ++it) {
    EXPECT_EQ(idf.df.at(key_of(it.key())), it.value().get<long>()) << it.key();
    ++checked;
  }
  EXPECT_EQ(idf.df.size(), checked);
}

TEST(CiderD, PerfectMatchScoresTen) {
  // All candidate n-grams unique to this image in a 2-image corpus; the
  // caption must span all four orders for every per-order cosine to be 1.
  auto idf = build_idf_text({{"red cat runs fast"}, {"blue dog sits still"}});
  EXPECT_NEAR(cider_d_text("red cat runs fast", {"red cat runs fast"}, idf), 10.0, 1e-12);
}

TEST(CiderD, DisjointCandidateScoresZero) {
  auto idf = build_idf_text({{"red cat runs"}, {"blue dog sits"}});
  EXPECT_DOUBLE_EQ(cider_d_text("purple elephant flies", {"red cat runs"}, idf), 0.0);
  EXPECT_DOUBLE_EQ(cider_d_text("", {"red cat runs"}, idf), 0.0);
  EXPECT_THROW(cider_d({"x"}, {}, idf), PreconditionError);
}

TEST(CiderD, HandFixtureValue) {
  std::ifstream in(std::string(LCLIP_FIXTURE_DIR) + "/cider_hand.json");
  nlohmann::json fixture;
  in >> fixture;
  std::vector<std::vector<std::string>> corpus;
  for (const auto& refs : fixture["corpus"]) corpus.push_back(refs.get<std::vector<std::string>>());
  const CorpusIDF idf = build_idf_text(corpus);
  const double got = cider_d_text(fixture["candidate"].get<std::string>(),
                                  fixture["refs"].get<std::vector<std::string>>(), idf);
  EXPECT_NEAR(got, fixture["expected_cider_d"].get<double>(), 1e-12);
}

TEST(CiderD, ReferenceOrderInvariance) {
  auto idf = build_idf_text({{"a red cat runs fast", "the red cat is fast"},
                             {"a blue dog sits still", "one blue dog"}});
  const std::vector<std::string> refs = {"a red cat runs fast", "the red cat is fast",
                                         "one red animal runs"};
  std::vector<std::string> shuffled = {refs[2], refs[0], refs[1]};
  EXPECT_DOUBLE_EQ(cider_d_text("a red cat runs", refs, idf),
                   cider_d_text("a red cat runs", shuffled, idf));
}

TEST(CiderD, BoundsProperty) {
  Rng rng(11);
  const std::vector<std::string> words = {"a", "red", "blue", "cat", "dog", "runs", "sits", "the"};
  auto sentence = [&](std::size_t len) {
    std::vector<std::string> t;
    for (std::size_t i = 0; i < len; ++i) t.push_back(words[rng.uniform_index(words.size())]);
    return t;
  };
  std::vector<std::vector<std::vector<std::string>>> corpus;
  for (int i = 0; i < 6; ++i) corpus.push_back({sentence(4 + rng.uniform_index(4))});
  const CorpusIDF idf = build_idf(corpus);
  for (int iter = 0; iter < 2000; ++iter) {
    const auto cand = sentence(1 + rng.uniform_index(8));
    std::vector<std::vector<std::string>> refs;
    const std::size_t nrefs = 1 + rng.uniform_index(3);
    for (std::size_t r = 0; r < nrefs; ++r) refs.push_back(sentence(2 + rng.uniform_index(6)));
    const double s = cider_d(cand, refs, idf);
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s, 10.0 + 1e-12);
  }
}

TEST(CiderD, LengthPenaltyIsGaussian) {
  auto idf = build_idf_text({{"red cat runs"}, {"blue dog sits"}});
  // Candidate repeats the reference content but is 2 tokens longer; every
  // per-order cosine shrinks and the penalty multiplies by exp(-4/72).
  const double base = cider_d_text("red cat runs", {"red cat runs"}, idf);
  const double longer = cider_d_text("red cat runs red cat", {"red cat runs"}, idf);
  EXPECT_LT(longer, base);
  EXPECT_GT(longer, 0.0);
}

TEST(CorpusIdf, JsonRoundTrip) {
  auto idf = build_idf_text({{"a red cat"}, {"a blue dog"}});
  const CorpusIDF back = CorpusIDF::from_json(idf.to_json());
  EXPECT_EQ(back.doc_count, idf.doc_count);
  EXPECT_EQ(back.df.size(), idf.df.size());
  for (const auto& [k, v] : idf.df) EXPECT_EQ(back.df.at(k), v);
}
