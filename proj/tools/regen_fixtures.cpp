// Regenerates the committed golden fixtures. Run from the repo root:
//   build/tools/regen_fixtures tests/fixtures
// CI compares freshly generated values against the committed files, so
// regenerating without bumping the embedded generator version will surface
// as a test failure, not silent drift.
#include <cstdio>
#include <filesystem>

#include "lclip/captioner.hpp"
#include "lclip/distill.hpp"
#include "lclip/ioutil.hpp"
#include "lclip/sha256.hpp"
#include "lclip/synthetic.hpp"

using namespace lclip;

namespace {

Json corpus_golden() {
  const auto corpus = generate_corpus(8, 2, 0.1, 42);
  Json items = Json::array();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const CorpusItem& item = corpus.item(i);
    items.push_back(Json{{"attrs", item.attrs},
                         {"caption", item.caption},
                         {"refs", item.refs},
                         {"patches_sha256", sha256_hex(item.patches.vec())}});
  }
  return Json{{"generator_version", corpus.generator_version},
              {"seed", 42},
              {"n_items", 8},
              {"n_attributes", 2},
              {"noise", 0.1},
              {"vocab", corpus.vocab.words()},
              {"items", items}};
}

Json teacher_planted() {
  const auto corpus = generate_corpus(320, 3, 0.05, 0);
  const auto teacher = make_synthetic_teacher<double>(corpus, 32, 0);
  auto pairs = corpus_pairs<double>(corpus.train, corpus.vocab);
  const double r1 = image_to_text_r1<double>(teacher, pairs);
  double matched = 0, unmatched = 0;
  long un = 0;
  std::vector<Tensor> v0s, u0s;
  for (const auto& p : pairs) {
    v0s.push_back(teacher.encode_image(p.patches).first);
    u0s.push_back(teacher.encode_text(p.tokens).first);
  }
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      const double s = dot_product(v0s[i], u0s[j]);
      if (i == j) matched += s;
      else {
        unmatched += s;
        ++un;
      }
    }
  return Json{{"generator_version", corpus.generator_version},
              {"corpus", {{"n_items", 320}, {"n_attributes", 3}, {"noise", 0.05}, {"seed", 0}}},
              {"teacher", {{"joint_dim", 32}, {"seed", 0}}},
              {"pairs", pairs.size()},
              {"r_at_1", r1},
              {"matched_mean", matched / static_cast<double>(pairs.size())},
              {"unmatched_mean", unmatched / static_cast<double>(un)}};
}

Json stage_fixture() {
  // Stage-1 fixture: batch 32, model dim 16, 200 steps (25 epochs over 256
  // training items); stage 2 then runs on the same pairs.
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

  auto pairs = corpus_pairs<double>(corpus.train, corpus.vocab);
  StageConfig s2{.stage = 2, .learning_rate = 5e-4, .batch_size = 16, .epochs = 10,
                 .freeze_text = true, .seed = 71, .augmentation = true};
  const TrainResult r2 = train_stage2(student, teacher, pairs, s2);
  const std::size_t spe = r2.margins.size() / 10;
  double m_first = 0, m_last = 0;
  for (std::size_t i = 0; i < spe; ++i) {
    m_first += r2.margins[i];
    m_last += r2.margins[r2.margins.size() - 1 - i];
  }
  return Json{{"generator_version", corpus.generator_version},
              {"stage1",
               {{"steps", r1.rows.size()},
                {"initial_loss", r1.rows.front().total},
                {"final_loss", r1.rows.back().total}}},
              {"stage2",
               {{"margin_first_epoch", m_first / static_cast<double>(spe)},
                {"margin_last_epoch", m_last / static_cast<double>(spe)}}}};
}

Json caption_sample() {
  const auto corpus = generate_corpus(16, 2, 0.05, 0);
  CaptionerConfig cfg{.layers = 2, .dim = 16, .heads = 2, .ffn_dim = 24,
                      .vocab = corpus.vocab.size(), .max_len = 8,
                      .feature_dim = corpus.world.patch_dim, .seed = 3};
  auto cap = build_captioner<double>(cfg);
  const auto s = sample_caption(cap, corpus.train[0].patches, SampleMode::multinomial, 3);
  return Json{{"description",
               "Multinomial sample with seed 3 from the fixed tiny captioner (corpus seed 0, "
               "captioner seed 3); generated once by the implementation and frozen."},
              {"generator_version", 1},
              {"tokens", s.tokens},
              {"sum_logp", s.sum_logp()}};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: regen_fixtures <fixtures-dir>\n");
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  atomic_write_file(dir / "corpus_golden.json", corpus_golden().dump(2) + "\n");
  atomic_write_file(dir / "teacher_planted.json", teacher_planted().dump(2) + "\n");
  atomic_write_file(dir / "stage_fixture.json", stage_fixture().dump(2) + "\n");
  atomic_write_file(dir / "caption_sample.json", caption_sample().dump(2) + "\n");
  std::printf("fixtures written to %s\n", dir.string().c_str());
  return 0;
}
