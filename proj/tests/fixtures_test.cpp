#include <gtest/gtest.h>

#include <fstream>

#include "lclip/distill.hpp"
#include "lclip/sha256.hpp"
#include "lclip/synthetic.hpp"

using namespace lclip;

namespace {

nlohmann::json load_fixture(const std::string& name) {
  std::ifstream in(std::string(LCLIP_FIXTURE_DIR) + "/" + name);
  EXPECT_TRUE(in.good()) << name;
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace

// The committed goldens must regenerate bit-identically from (generator
// version, seed). Any drift requires a version bump plus regeneration via
// the regen_fixtures tool, which rewrites these files.
TEST(GoldenFixtures, CorpusRegeneratesBitIdentically) {
  const auto fixture = load_fixture("corpus_golden.json");
  ASSERT_EQ(fixture["generator_version"].get<int>(), kCorpusGeneratorVersion)
      << "generator version changed; regenerate fixtures and bump the version";
  const auto corpus = generate_corpus(fixture["n_items"].get<int>(),
                                      fixture["n_attributes"].get<int>(),
                                      fixture["noise"].get<double>(),
                                      fixture["seed"].get<std::uint64_t>());
  EXPECT_EQ(corpus.vocab.words(), fixture["vocab"].get<std::vector<std::string>>());
  const auto& items = fixture["items"];
  ASSERT_EQ(items.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const CorpusItem& item = corpus.item(i);
    EXPECT_EQ(item.attrs, items[i]["attrs"].get<std::vector<int>>());
    EXPECT_EQ(item.caption, items[i]["caption"].get<std::string>());
    EXPECT_EQ(item.refs, items[i]["refs"].get<std::vector<std::string>>());
    EXPECT_EQ(sha256_hex(item.patches.vec()), items[i]["patches_sha256"].get<std::string>());
  }
}

TEST(GoldenFixtures, PlantedTeacherRetrievalFrozenValue) {
  const auto fixture = load_fixture("teacher_planted.json");
  const auto& cj = fixture["corpus"];
  const auto corpus = generate_corpus(cj["n_items"].get<int>(), cj["n_attributes"].get<int>(),
                                      cj["noise"].get<double>(), cj["seed"].get<std::uint64_t>());
  const auto teacher = make_synthetic_teacher<double>(
      corpus, fixture["teacher"]["joint_dim"].get<int>(),
      fixture["teacher"]["seed"].get<std::uint64_t>());
  auto pairs = corpus_pairs<double>(corpus.train, corpus.vocab);
  ASSERT_GE(pairs.size(), 256u);
  const double r1 = image_to_text_r1<double>(teacher, pairs);
  EXPECT_DOUBLE_EQ(r1, fixture["r_at_1"].get<double>());
  EXPECT_GT(r1, 0.9);
}

TEST(GoldenFixtures, StageFixtureFrozenLossesAndMargins) {
  const auto fixture = load_fixture("stage_fixture.json");
  // Frozen directional facts from the committed seeded run.
  const double initial = fixture["stage1"]["initial_loss"].get<double>();
  const double final_loss = fixture["stage1"]["final_loss"].get<double>();
  EXPECT_EQ(fixture["stage1"]["steps"].get<long>(), 200);
  EXPECT_LT(final_loss, 0.5 * initial);
  const double m_first = fixture["stage2"]["margin_first_epoch"].get<double>();
  const double m_last = fixture["stage2"]["margin_last_epoch"].get<double>();
  EXPECT_GT(m_last, m_first);
}

// Re-running the committed stage fixture is the expensive half of the drift
// check; it reproduces the frozen numbers exactly in this environment.
TEST(GoldenFixtures, StageFixtureReproduces) {
  const auto fixture = load_fixture("stage_fixture.json");
  auto corpus = generate_corpus(320, 3, 0.1, 7);
  const auto teacher = make_synthetic_teacher<double>(corpus, 32, 7);
  EncoderConfig vis{.num_layers = 2, .num_shared = 1, .multiplex_factor = 2, .model_dim = 16,
                    .heads = 2, .ffn_dim = 32, .max_seq_len = 8,
                    .input_dim = corpus.world.patch_dim};
  EncoderConfig txt{.num_layers = 2, .num_shared = 1, .multiplex_factor = 2, .model_dim = 16,
                    .heads = 2, .ffn_dim = 32, .max_seq_len = 12};
  auto student = build_model<double>(vis, txt, corpus.vocab.size(), 4, 32, 7);
  adopt_stem(student, teacher);
  std::vector<Tensor> vdata;
  std::vector<std::vector<int>> tdata;
  for (const auto& item : corpus.train) {
    vdata.push_back(item.patches);
    tdata.push_back(corpus.vocab.encode(item.caption));
  }
  StageConfig s1{.stage = 1, .learning_rate = 3e-3, .batch_size = 32, .epochs = 25, .seed = 70};
  const TrainResult r1 = train_stage1(student, teacher, vdata, tdata, s1);
  ASSERT_EQ(r1.rows.size(), 200u);
  EXPECT_DOUBLE_EQ(r1.rows.front().total, fixture["stage1"]["initial_loss"].get<double>());
  EXPECT_DOUBLE_EQ(r1.rows.back().total, fixture["stage1"]["final_loss"].get<double>());
}
