#include "lclip/distill.hpp"

#include <gtest/gtest.h>

#include "lclip/checkpoint.hpp"
#include "lclip/gradcheck.hpp"

using namespace lclip;

namespace {

EncoderConfig tiny_vision(int patch_dim) {
  return {.num_layers = 2, .num_shared = 1, .multiplex_factor = 2, .model_dim = 8,
          .heads = 2, .ffn_dim = 16, .max_seq_len = 8, .input_dim = patch_dim};
}

EncoderConfig tiny_text() {
  return {.num_layers = 2, .num_shared = 1, .multiplex_factor = 2, .model_dim = 8,
          .heads = 2, .ffn_dim = 16, .max_seq_len = 6};
}

}  // namespace

TEST(SingleModalLoss, HandValues) {
  EXPECT_NEAR(single_modal_loss_value<double>(Tensor(Shape{2}, {1, 0}), Tensor(Shape{2}, {1, 0})),
              0.0, 1e-12);
  EXPECT_NEAR(single_modal_loss_value<double>(Tensor(Shape{2}, {1, 0}), Tensor(Shape{2}, {0, 1})),
              1.0, 1e-12);
  EXPECT_NEAR(single_modal_loss_value<double>(Tensor(Shape{2}, {1, 1}), Tensor(Shape{2}, {2, 2})),
              0.5, 1e-12);
}

TEST(SingleModalLoss, ZeroNormRejected) {
  EXPECT_THROW(
      single_modal_loss_value<double>(Tensor::zeros(Shape{2}), Tensor(Shape{2}, {1, 0})),
      DegenerateInputError);
}

TEST(SingleModalLoss, TeacherDetached) {
  // The teacher enters as a tensor; only student-side params can accumulate.
  ParamT<double> student("s", Tensor(Shape{3}, {0.3, -0.2, 0.9}));
  ParamT<double> teacher_like("t", Tensor(Shape{3}, {1.0, 0.5, -0.5}));
  zero_grads<double>({&student, &teacher_like});
  Graph<double> g;
  g.backward(single_modal_loss<double>(g, teacher_like.value, g.param(student)));
  double sgrad = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sgrad += std::abs(student.grad[i]);
    EXPECT_EQ(teacher_like.grad[i], 0.0);
  }
  EXPECT_GT(sgrad, 0.0);
}

TEST(SimMatrix, HandCases) {
  // Orthonormal rows in the same order give the identity.
  Tensor eye_rows(Shape{2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(sim_matrix(eye_rows, eye_rows), Tensor::identity(2));
  // All rows one unit vector -> all ones.
  Tensor ones_rows(Shape{3, 2}, {1, 0, 1, 0, 1, 0});
  auto S = sim_matrix(ones_rows, ones_rows);
  for (std::size_t i = 0; i < S.numel(); ++i) EXPECT_DOUBLE_EQ(S[i], 1.0);
  // 2x2 hand case.
  const double r = std::sqrt(0.5);
  Tensor v(Shape{2, 2}, {1, 0, 0, 1});
  Tensor u(Shape{2, 2}, {1, 0, r, r});
  auto S2 = sim_matrix(v, u);
  EXPECT_NEAR(S2(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(S2(0, 1), 0.7071, 1e-4);
  EXPECT_NEAR(S2(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(S2(1, 1), 0.7071, 1e-4);
  EXPECT_THROW(sim_matrix(v, Tensor::zeros(Shape{3, 2})), DimensionError);
}

TEST(SrLoss, HandCaseAndZeroCases) {
  Tensor st(Shape{2, 2}, {0.5, 0.2, 0.1, 0.6});
  Tensor ss(Shape{2, 2}, {0.4, 0.3, 0.2, 0.7});
  EXPECT_NEAR(sr_loss_value(st, ss), 0.3, 1e-12);
  EXPECT_NEAR(sr_loss_value(st, st), 0.0, 1e-12);
  // Hinge-satisfied configuration is exactly zero.
  Tensor good(Shape{2, 2}, {0.6, 0.1, 0.0, 0.9});
  EXPECT_EQ(sr_loss_value(st, good), 0.0);
}

TEST(SrLoss, ZeroWheneverHingesSatisfiedProperty) {
  Rng rng(99);
  for (int iter = 0; iter < 10000; ++iter) {
    const std::size_t b = 2 + rng.uniform_index(7);
    Tensor st(Shape{b, b});
    Tensor ss(Shape{b, b});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        const double t = 2.0 * rng.uniform() - 1.0;
        st(i, j) = t;
        const double slack = rng.uniform();
        ss(i, j) = i == j ? t + slack : t - slack;  // diag >=, off-diag <=
      }
    ASSERT_EQ(sr_loss_value(st, ss), 0.0);
  }
}

TEST(SrLoss, MonotonicityInStudentEntries) {
  Rng rng(7);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t b = 2 + rng.uniform_index(5);
    Tensor st = Tensor::normal(Shape{b, b}, rng, 0.5);
    Tensor ss = Tensor::normal(Shape{b, b}, rng, 0.5);
    const double base = sr_loss_value(st, ss);
    const std::size_t i = rng.uniform_index(b), j = rng.uniform_index(b);
    Tensor bumped = ss;
    bumped(i, j) += 0.3;
    const double after = sr_loss_value(st, bumped);
    if (i == j)
      EXPECT_LE(after, base + 1e-12);  // raising a diagonal never increases
    else
      EXPECT_GE(after, base - 1e-12);  // raising an off-diagonal never decreases
  }
}

TEST(SrLoss, PermutationInvariance) {
  Rng rng(13);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t b = 2 + rng.uniform_index(5);
    Tensor st = Tensor::normal(Shape{b, b}, rng, 0.5);
    Tensor ss = Tensor::normal(Shape{b, b}, rng, 0.5);
    std::vector<std::size_t> perm(b);
    for (std::size_t i = 0; i < b; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    Tensor stp(Shape{b, b}), ssp(Shape{b, b});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        stp(i, j) = st(perm[i], perm[j]);
        ssp(i, j) = ss(perm[i], perm[j]);
      }
    EXPECT_NEAR(sr_loss_value(st, ss), sr_loss_value(stp, ssp), 1e-12);
  }
}

TEST(SrLoss, DegenerateBatchRejected) {
  Tensor one(Shape{1, 1}, {0.5});
  EXPECT_THROW(sr_loss_value(one, one), DegenerateBatchError);
}

TEST(SrLoss, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  Tensor st = Tensor::normal(Shape{3, 3}, rng, 0.5);
  ParamT<double> s("s", Tensor::normal(Shape{3, 3}, rng, 0.5));
  // Keep every hinge argument away from its kink relative to eps.
  for (std::size_t i = 0; i < 9; ++i)
    if (std::abs(s.value[i] - st[i]) < 1e-3) s.value[i] += 2e-3;
  const double err = finite_diff_check<double>(
      [&](Graph<double>& g) { return sr_loss(g, st, g.param(s)); }, {&s}, 1e-5);
  EXPECT_LE(err, 1e-9);  // piecewise linear: exact away from kinks
}

TEST(SrLoss, TeacherDetachedThroughEncoders) {
  // Gradients w.r.t. teacher-producing parameters are exactly zero: the
  // teacher model params never enter the graph.
  auto corpus = generate_corpus(8, 2, 0.05, 0);
  EncoderConfig vis = tiny_vision(corpus.world.patch_dim);
  auto teacher_model = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 3);
  auto student = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 4);
  LCLIPEncoderT<double> teacher(teacher_model);
  auto pairs = corpus_pairs<double>(corpus.train, corpus.vocab);
  pairs.resize(3);
  for (auto& p : pairs) p.tokens.resize(std::min<std::size_t>(p.tokens.size(), 5));

  auto tparams = teacher_model.params();
  auto sparams = student.params();
  zero_grads(tparams);
  zero_grads(sparams);
  Graph<double> g;
  std::vector<ad::Var<double>> sv, su;
  TensorT<double> tv(Shape{3, 8}), tu(Shape{3, 8});
  for (std::size_t i = 0; i < 3; ++i) {
    auto [v0, V] = teacher.encode_image(pairs[i].patches);
    auto [u0, U] = teacher.encode_text(pairs[i].tokens);
    for (std::size_t j = 0; j < 8; ++j) {
      tv(i, j) = v0[j];
      tu(i, j) = u0[j];
    }
    sv.push_back(student.encode_image_graph(g, pairs[i].patches).global);
    su.push_back(student.encode_text_graph(g, pairs[i].tokens).global);
  }
  auto loss = sr_loss(g, sim_matrix(tv, tu), sim_matrix_graph(ad::stack_rows(sv), ad::stack_rows(su)));
  g.backward(loss);
  for (auto* p : tparams)
    for (std::size_t i = 0; i < p->grad.numel(); ++i) ASSERT_EQ(p->grad[i], 0.0);
}

TEST(Stage1, ExactTeacherCopyIsFixedPoint) {
  auto corpus = generate_corpus(8, 2, 0.05, 0);
  EncoderConfig vis = tiny_vision(corpus.world.patch_dim);
  auto teacher_model = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 3);
  auto student = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 3);  // same seed
  LCLIPEncoderT<double> teacher(teacher_model);
  std::vector<Tensor> vdata;
  std::vector<std::vector<int>> tdata;
  for (const auto& it : corpus.train) {
    vdata.push_back(it.patches);
    auto ids = corpus.vocab.encode(it.caption);
    ids.resize(std::min<std::size_t>(ids.size(), 5));
    tdata.push_back(ids);
  }
  StageConfig cfg{.stage = 1, .learning_rate = 1e-3, .batch_size = 4, .epochs = 2, .seed = 9};
  auto result = train_stage1(student, teacher, vdata, tdata, cfg);
  for (const auto& row : result.rows) EXPECT_LE(row.total, 1e-6);
}

TEST(Stage1, ZeroLearningRateLeavesParamsBitIdentical) {
  auto corpus = generate_corpus(8, 2, 0.05, 0);
  EncoderConfig vis = tiny_vision(corpus.world.patch_dim);
  auto student = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 4);
  auto teacher = make_synthetic_teacher<double>(corpus, 8, 0);
  std::vector<Tensor> vdata;
  std::vector<std::vector<int>> tdata;
  for (const auto& it : corpus.train) {
    vdata.push_back(it.patches);
    auto ids = corpus.vocab.encode(it.caption);
    ids.resize(std::min<std::size_t>(ids.size(), 5));
    tdata.push_back(ids);
  }
  std::vector<Tensor> before;
  for (auto* p : student.params()) before.push_back(p->value);
  StageConfig cfg{.stage = 1, .learning_rate = 0.0, .batch_size = 4, .epochs = 1, .seed = 9};
  train_stage1(student, teacher, vdata, tdata, cfg);
  auto params = student.params();
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(params[i]->value, before[i]);
}

TEST(Stage1, WrongStageRejected) {
  auto corpus = generate_corpus(8, 2, 0.05, 0);
  EncoderConfig vis = tiny_vision(corpus.world.patch_dim);
  auto student = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 4);
  auto teacher = make_synthetic_teacher<double>(corpus, 8, 0);
  StageConfig cfg{.stage = 2, .learning_rate = 1e-3, .batch_size = 4, .epochs = 1,
                  .freeze_text = true, .seed = 9};
  EXPECT_THROW(train_stage1(student, teacher, {corpus.train[0].patches},
                            {corpus.vocab.encode(corpus.train[0].caption)}, cfg),
               ConfigError);
}

TEST(Stage2, FreezeContractAndConfigValidation) {
  auto corpus = generate_corpus(12, 2, 0.05, 0);
  EncoderConfig vis = tiny_vision(corpus.world.patch_dim);
  auto student = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 4);
  auto teacher = make_synthetic_teacher<double>(corpus, 8, 0);
  auto pairs = corpus_pairs<double>(corpus.train, corpus.vocab);
  for (auto& p : pairs) p.tokens.resize(std::min<std::size_t>(p.tokens.size(), 5));

  StageConfig bad{.stage = 2, .learning_rate = 1e-3, .batch_size = 4, .epochs = 1,
                  .freeze_text = false, .seed = 9};
  EXPECT_THROW(train_stage2(student, teacher, pairs, bad), ConfigError);

  StageConfig b1{.stage = 2, .learning_rate = 1e-3, .batch_size = 1, .epochs = 1,
                 .freeze_text = true, .seed = 9};
  EXPECT_THROW(train_stage2(student, teacher, pairs, b1), DegenerateBatchError);

  const std::string text_before = params_sha256(student.text_params());
  StageConfig cfg{.stage = 2, .learning_rate = 1e-2, .batch_size = 4, .epochs = 2,
                  .freeze_text = true, .seed = 9, .augmentation = true};
  train_stage2(student, teacher, pairs, cfg);
  EXPECT_EQ(params_sha256(student.text_params()), text_before);
  // Vision moved.
  bool vision_moved = false;
  auto fresh = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 4);
  auto pv = student.vision_params();
  auto fv = fresh.vision_params();
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (!pv[i]->frozen && !(pv[i]->value == fv[i]->value)) vision_moved = true;
  EXPECT_TRUE(vision_moved);
}

TEST(InfoNce, OptionalContrastiveLossIsFinite) {
  Rng rng(5);
  auto rows = ad::constant(Tensor::normal(Shape{4, 4}, rng, 0.3));
  auto loss = info_nce_loss(rows);
  EXPECT_TRUE(loss->value.all_finite());
  EXPECT_GT(loss->value.item(), 0.0);
}

TEST(SyntheticTeacher, DeterminismAndPlantedStructure) {
  auto corpus = generate_corpus(64, 3, 0.05, 0);
  auto t1 = make_synthetic_teacher<double>(corpus, 32, 0);
  auto t2 = make_synthetic_teacher<double>(corpus, 32, 0);
  const auto& item = corpus.train[0];
  EXPECT_EQ(t1.encode_image(item.patches).first, t2.encode_image(item.patches).first);
  const auto ids = corpus.vocab.encode(item.caption);
  EXPECT_EQ(t1.encode_text(ids).first, t2.encode_text(ids).first);

  // Matched pairs score above unmatched on average.
  auto pairs = corpus_pairs<double>(corpus.train, corpus.vocab);
  double matched = 0, unmatched = 0;
  long un = 0;
  std::vector<Tensor> v0s, u0s;
  for (const auto& p : pairs) {
    v0s.push_back(t1.encode_image(p.patches).first);
    u0s.push_back(t1.encode_text(p.tokens).first);
  }
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      const double s = dot_product(v0s[i], u0s[j]);
      if (i == j)
        matched += s;
      else {
        unmatched += s;
        ++un;
      }
    }
  EXPECT_GT(matched / static_cast<double>(pairs.size()), unmatched / static_cast<double>(un));
}

TEST(GradientCorrectness, LossesThroughFullTinyEncoders) {
  // Eq.-style losses composed through complete tiny models. The numeric side
  // uses the extended-precision mirror; without the headroom, coordinates
  // with near-cancelling gradients drown in the ulp noise of the loss value.
  auto corpus = generate_corpus(8, 2, 0.05, 0);
  EncoderConfig vis = tiny_vision(corpus.world.patch_dim);
  auto student = build_model<double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 0);
  auto student_hi = build_model<long double>(vis, tiny_text(), corpus.vocab.size(), 4, 8, 0);
  auto teacher = make_synthetic_teacher<double>(corpus, 8, 1);
  auto pairs = corpus_pairs<double>(corpus.train, corpus.vocab);
  pairs.resize(3);
  for (auto& p : pairs) p.tokens.resize(std::min<std::size_t>(p.tokens.size(), 5));
  auto params = student.params();
  auto params_hi = student_hi.params();
  auto sync = [&]() {
    for (std::size_t i = 0; i < params.size(); ++i)
      params_hi[i]->value = params[i]->value.cast<long double>();
  };

  const Tensor tv0 = teacher.encode_image(pairs[0].patches).first;
  auto loss1 = [&]<class T>(Graph<T>& g, LCLIPModelT<T>& m) {
    return single_modal_loss(g, tv0.cast<T>(),
                             m.encode_image_graph(g, pairs[0].patches.cast<T>()).global);
  };
  const double err1 = finite_diff_check<double>(
      [&](Graph<double>& g) { return loss1(g, student); }, params, 1e-5, nullptr,
      [&]() -> long double {
        sync();
        Graph<long double> g(Graph<long double>::Mode::inference);
        return loss1(g, student_hi)->value.item();
      });
  EXPECT_LE(err1, 1e-6);

  TensorT<double> tv(Shape{3, 8}), tu(Shape{3, 8});
  for (std::size_t i = 0; i < 3; ++i) {
    auto v0 = teacher.encode_image(pairs[i].patches).first;
    auto u0 = teacher.encode_text(pairs[i].tokens).first;
    for (std::size_t j = 0; j < 8; ++j) {
      tv(i, j) = v0[j];
      tu(i, j) = u0[j];
    }
  }
  const Tensor st = sim_matrix(tv, tu);
  auto loss2 = [&]<class T>(Graph<T>& g, LCLIPModelT<T>& m) {
    std::vector<ad::Var<T>> sv, su;
    for (std::size_t i = 0; i < 3; ++i) {
      sv.push_back(m.encode_image_graph(g, pairs[i].patches.cast<T>()).global);
      su.push_back(m.encode_text_graph(g, pairs[i].tokens).global);
    }
    return sr_loss(g, st.cast<T>(), sim_matrix_graph(ad::stack_rows(sv), ad::stack_rows(su)));
  };
  const double err2 = finite_diff_check<double>(
      [&](Graph<double>& g) { return loss2(g, student); }, params, 1e-5, nullptr,
      [&]() -> long double {
        sync();
        Graph<long double> g(Graph<long double>::Mode::inference);
        return loss2(g, student_hi)->value.item();
      });
  EXPECT_LE(err2, 1e-6);
}
