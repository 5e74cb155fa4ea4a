#pragma once

#include <cmath>
#include <vector>

#include "lclip/dual_encoder.hpp"
#include "lclip/encoder.hpp"
#include "lclip/gradcheck.hpp"
#include "lclip/param.hpp"
#include "lclip/rng.hpp"
#include "lclip/synthetic.hpp"

namespace lclip {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Single-modal distillation loss: 0.5*MAE + 0.5*(1 - cos). The teacher side
// enters as a plain tensor, so it is detached by construction.
template <class T>
ad::Var<T> single_modal_loss(Graph<T>& g, const TensorT<T>& r_teacher,
                             const ad::Var<T>& r_student) {
  check_same_shape(r_teacher, r_student->value, "single_modal_loss");
  if (r_teacher.norm2() == 0.0 || r_student->value.norm2() == 0.0)
    throw DegenerateInputError("single_modal_loss: zero-norm embedding");
  auto teacher = g.constant(r_teacher);
  auto half_mae = ad::scale(ad::mae(teacher, r_student), T(0.5));
  auto one = g.constant(TensorT<T>::scalar(T(1)));
  auto half_cos = ad::scale(ad::sub(one, ad::cosine(teacher, r_student)), T(0.5));
  return ad::add(half_mae, half_cos);
}

template <class T>
double single_modal_loss_value(const TensorT<T>& r_teacher, const TensorT<T>& r_student) {
  Graph<T> g(Graph<T>::Mode::inference);
  return static_cast<double>(single_modal_loss<T>(g, r_teacher, ad::constant(r_student))->value.item());
}

// Pairwise similarity matrix S = V0 * U0^T from row-normalized batches.
template <class T>
TensorT<T> sim_matrix(const TensorT<T>& v0_rows, const TensorT<T>& u0_rows) {
  if (v0_rows.rank() != 2 || u0_rows.rank() != 2 || v0_rows.rows() != u0_rows.rows() ||
      v0_rows.cols() != u0_rows.cols())
    throw DimensionError("sim_matrix: batch shapes disagree " + shape_string(v0_rows.shape()) +
                         " vs " + shape_string(u0_rows.shape()));
  return matmul(v0_rows, transpose(u0_rows));
}

template <class T>
ad::Var<T> sim_matrix_graph(const ad::Var<T>& v0_rows, const ad::Var<T>& u0_rows) {
  if (v0_rows->value.rows() != u0_rows->value.rows() ||
      v0_rows->value.cols() != u0_rows->value.cols())
    throw DimensionError("sim_matrix: batch shapes disagree");
  return ad::matmul(v0_rows, ad::transpose(u0_rows));
}

// Similarity Regulator loss: hinge on the diagonal pushing student matched
// similarities above the teacher's, hinge off the diagonal pushing student
// mismatched similarities below. Fused op; subgradient 0 at the kinks, and
// the teacher matrix is detached by construction.
template <class T>
ad::Var<T> sr_loss(Graph<T>& g, const TensorT<T>& s_teacher, const ad::Var<T>& s_student) {
  (void)g;
  const TensorT<T>& st = s_student->value;
  if (s_teacher.rank() != 2 || s_teacher.rows() != s_teacher.cols())
    throw DimensionError("sr_loss: teacher matrix must be square");
  check_same_shape(s_teacher, st, "sr_loss");
  const std::size_t b = st.rows();
  if (b < 2) throw DegenerateBatchError("sr_loss: batch size must be >= 2 (got " +
                                        std::to_string(b) + ")");
  T loss = 0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      const T gap = i == j ? s_teacher(i, j) - st(i, j) : st(i, j) - s_teacher(i, j);
      if (gap > T(0)) loss += gap;
    }
  return ad::detail::make_op<T>(
      TensorT<T>::scalar(loss), {s_student}, [s_teacher](ad::Node<T>& n) {
        const TensorT<T>& sv = n.parents[0]->value;
        auto& grad = ad::detail::pgrad(n, 0);
        const std::size_t b = sv.rows();
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j) {
            if (i == j && s_teacher(i, j) - sv(i, j) > T(0)) grad(i, j) -= n.grad[0];
            if (i != j && sv(i, j) - s_teacher(i, j) > T(0)) grad(i, j) += n.grad[0];
          }
      });
}

template <class T>
double sr_loss_value(const TensorT<T>& s_teacher, const TensorT<T>& s_student) {
  Graph<T> g(Graph<T>::Mode::inference);
  return static_cast<double>(sr_loss<T>(g, s_teacher, ad::constant(s_student))->value.item());
}

// Symmetric InfoNCE on the student similarity matrix. Optional stage-2
// objective kept for the comparison experiment; not the default pipeline.
template <class T>
ad::Var<T> info_nce_loss(const ad::Var<T>& s_student, T temperature = T(0.07)) {
  const std::size_t b = s_student->value.rows();
  if (b < 2) throw DegenerateBatchError("info_nce_loss: batch size must be >= 2");
  auto logits = ad::scale(s_student, T(1) / temperature);
  std::vector<std::size_t> diag(b);
  for (std::size_t i = 0; i < b; ++i) diag[i] = i;
  auto row_nll = ad::gather_per_row(ad::log_softmax_rows(logits), diag);
  auto col_nll = ad::gather_per_row(ad::log_softmax_rows(ad::transpose(logits)), diag);
  return ad::scale(ad::add(ad::mean(row_nll), ad::mean(col_nll)), T(-0.5));
}

// ---------------------------------------------------------------------------
// Training stages
// ---------------------------------------------------------------------------

struct StageConfig {
  int stage = 1;
  double learning_rate = 5e-3;  // stage-2 default is 1e-4
  int batch_size = 32;
  int epochs = 1;
  bool freeze_text = false;  // required true for stage 2
  std::uint64_t seed = 0;
  bool augmentation = false;     // stage 2 only
  bool use_contrastive = false;  // comparison experiment: InfoNCE instead of SR
};

struct LossRow {
  long step = 0;
  double total = 0, sr = 0, d = 0;
};

struct TrainResult {
  std::vector<LossRow> rows;
  std::vector<double> margins;  // stage 2: mean(diag(S_s) - diag(S_t)) per step

  double first_epoch_mean(int steps_per_epoch) const {
    double s = 0;
    int n = std::min<int>(steps_per_epoch, static_cast<int>(rows.size()));
    for (int i = 0; i < n; ++i) s += rows[static_cast<std::size_t>(i)].total;
    return n ? s / n : 0;
  }

  double last_epoch_mean(int steps_per_epoch) const {
    double s = 0;
    const int n = std::min<int>(steps_per_epoch, static_cast<int>(rows.size()));
    for (int i = 0; i < n; ++i) s += rows[rows.size() - 1 - static_cast<std::size_t>(i)].total;
    return n ? s / n : 0;
  }
};

struct PairExample {
  Tensor patches;
  std::vector<int> tokens;
};

namespace detail {

template <class T>
void check_finite_loss(double loss, long step) {
  if (!std::isfinite(loss))
    throw TrainingError("training diverged (non-finite loss) at step " + std::to_string(step),
                        step);
}

// Semantics-preserving augmentation only: horizontal flip (patch order
// reversal) and crop-style contiguous patch subset. Never color-like changes.
template <class T>
TensorT<T> augment_patches(const TensorT<T>& patches, Rng& rng) {
  TensorT<T> out = patches;
  if (rng.bernoulli(0.5)) {
    const std::size_t n = out.rows(), c = out.cols();
    for (std::size_t i = 0; i < n / 2; ++i)
      for (std::size_t j = 0; j < c; ++j) std::swap(out(i, j), out(n - 1 - i, j));
  }
  if (rng.bernoulli(0.5) && out.rows() >= 3) {
    const std::size_t n = out.rows();
    const std::size_t keep = std::max<std::size_t>(2, (n * 7) / 10);
    const std::size_t start = rng.uniform_index(n - keep + 1);
    TensorT<T> crop(Shape{keep, out.cols()});
    for (std::size_t i = 0; i < keep; ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) crop(i, j) = out(start + i, j);
    out = std::move(crop);
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                           Rng& rng, bool drop_tail_below2) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx.begin(), idx.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> b(idx.begin() + static_cast<long>(at),
                               idx.begin() + static_cast<long>(std::min(n, at + static_cast<std::size_t>(batch_size))));
    if (drop_tail_below2 && b.size() < 2) continue;
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace detail

// Stage 1: two single-modal distillations, vision and text, each pulling the
// student global embedding toward the teacher's with the Eq.-style loss.
template <class T>
TrainResult train_stage1(LCLIPModelT<T>& student, const DualEncoderT<T>& teacher,
                         const std::vector<Tensor>& vision_data,
                         const std::vector<std::vector<int>>& text_data,
                         const StageConfig& cfg) {
  if (cfg.stage != 1) throw ConfigError("train_stage1: cfg.stage must be 1");
  if (cfg.batch_size < 1) throw ConfigError("train_stage1: batch_size must be >= 1");
  if (vision_data.empty() || text_data.empty())
    throw PreconditionError("train_stage1: empty training data");

  auto params = student.params();
  Adam<T> opt({.lr = cfg.learning_rate});
  Rng order_rng(derive_seed(cfg.seed, 0x5701));
  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto vbatches = detail::epoch_batches(vision_data.size(), cfg.batch_size, order_rng, false);
    auto tbatches = detail::epoch_batches(text_data.size(), cfg.batch_size, order_rng, false);
    const std::size_t nb = std::max(vbatches.size(), tbatches.size());
    for (std::size_t bi = 0; bi < nb; ++bi) {
      const auto& vb = vbatches[bi % vbatches.size()];
      const auto& tb = tbatches[bi % tbatches.size()];
      zero_grads(params);
      Graph<T> g;
      std::vector<ad::Var<T>> terms;
      for (std::size_t i : vb) {
        const TensorT<T> patches = vision_data[i].template cast<T>();
        const TensorT<T> tv0 = teacher.encode_image(patches).first;
        terms.push_back(single_modal_loss(g, tv0, student.encode_image_graph(g, patches).global));
      }
      double loss_v = 0;
      for (auto& t : terms) loss_v += static_cast<double>(t->value.item());
      loss_v /= static_cast<double>(vb.size());
      auto vision_loss = ad::scale(ad::add_n(terms), T(1) / static_cast<T>(vb.size()));

      std::vector<ad::Var<T>> tterms;
      for (std::size_t i : tb) {
        const TensorT<T> tu0 = teacher.encode_text(text_data[i]).first;
        tterms.push_back(single_modal_loss(g, tu0, student.encode_text_graph(g, text_data[i]).global));
      }
      double loss_t = 0;
      for (auto& t : tterms) loss_t += static_cast<double>(t->value.item());
      loss_t /= static_cast<double>(tb.size());
      auto total = ad::add(vision_loss, ad::scale(ad::add_n(tterms), T(1) / static_cast<T>(tb.size())));

      const double loss = static_cast<double>(total->value.item());
      detail::check_finite_loss<T>(loss, step);
      g.backward(total);
      opt.step(params);
      result.rows.push_back({step, loss, 0.0, loss});
      ++step;
    }
  }
  return result;
}

// Stage 2: Similarity Regulator plus the single-modal loss on the vision side
// (the text encoder is frozen, so Eq. 1 on text would be a no-op anyway).
template <class T>
TrainResult train_stage2(LCLIPModelT<T>& student, const DualEncoderT<T>& teacher,
                         const std::vector<PairExample>& pairs, const StageConfig& cfg) {
  if (cfg.stage != 2) throw ConfigError("train_stage2: cfg.stage must be 2");
  if (!cfg.freeze_text)
    throw ConfigError("train_stage2: the text encoder must be frozen in stage 2");
  if (cfg.batch_size < 2)
    throw DegenerateBatchError("train_stage2: batch size must be >= 2 for the SR loss");
  if (pairs.size() < 2) throw DegenerateBatchError("train_stage2: need at least 2 pairs");

  student.set_text_frozen(true);
  auto params = student.params();
  Adam<T> opt({.lr = cfg.learning_rate});
  Rng order_rng(derive_seed(cfg.seed, 0x5702));
  Rng aug_rng(derive_seed(cfg.seed, 0xA46));
  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : detail::epoch_batches(pairs.size(), cfg.batch_size, order_rng, true)) {
      zero_grads(params);
      Graph<T> g;
      std::vector<ad::Var<T>> sv0s, su0s, d_terms;
      TensorT<T> tv0s(Shape{batch.size(), static_cast<std::size_t>(student.joint_dim)});
      TensorT<T> tu0s(Shape{batch.size(), static_cast<std::size_t>(student.joint_dim)});
      for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const auto& ex = pairs[batch[bi]];
        TensorT<T> patches = ex.patches.template cast<T>();
        if (cfg.augmentation) patches = detail::augment_patches<T>(patches, aug_rng);
        const TensorT<T> tv0 = teacher.encode_image(patches).first;
        const TensorT<T> tu0 = teacher.encode_text(ex.tokens).first;
        for (std::size_t j = 0; j < tv0.numel(); ++j) {
          tv0s(bi, j) = tv0[j];
          tu0s(bi, j) = tu0[j];
        }
        auto sv = student.encode_image_graph(g, patches).global;
        auto su = student.encode_text_graph(g, ex.tokens).global;
        d_terms.push_back(single_modal_loss(g, tv0, sv));
        sv0s.push_back(sv);
        su0s.push_back(su);
      }
      const TensorT<T> s_teacher = sim_matrix(tv0s, tu0s);
      auto s_student = sim_matrix_graph(ad::stack_rows(sv0s), ad::stack_rows(su0s));
      auto sr = cfg.use_contrastive ? info_nce_loss(s_student)
                                    : sr_loss(g, s_teacher, s_student);
      auto d_loss = ad::scale(ad::add_n(d_terms), T(1) / static_cast<T>(batch.size()));
      auto total = ad::add(sr, d_loss);

      const double loss = static_cast<double>(total->value.item());
      detail::check_finite_loss<T>(loss, step);
      g.backward(total);
      opt.step(params);

      double margin = 0;
      for (std::size_t i = 0; i < batch.size(); ++i)
        margin += static_cast<double>(s_student->value(i, i) - s_teacher(i, i));
      margin /= static_cast<double>(batch.size());
      result.margins.push_back(margin);
      // Logged losses are per-sample so the curve is comparable across stages
      // and batch sizes; the optimization objective above keeps the plain sum.
      const double sr_per_item =
          static_cast<double>(sr->value.item()) / static_cast<double>(batch.size());
      const double d_val = static_cast<double>(d_loss->value.item());
      result.rows.push_back({step, sr_per_item + d_val, sr_per_item, d_val});
      ++step;
    }
  }
  return result;
}

// Image-to-text retrieval R@1 over matched pairs: for every image, does its
// own caption score highest?
template <class T>
double image_to_text_r1(const DualEncoderT<T>& enc, const std::vector<PairExample>& pairs) {
  if (pairs.empty()) throw PreconditionError("image_to_text_r1: empty pair list");
  std::vector<TensorT<T>> v0s, u0s;
  for (const auto& ex : pairs) {
    v0s.push_back(enc.encode_image(ex.patches.template cast<T>()).first);
    u0s.push_back(enc.encode_text(ex.tokens).first);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::size_t best = 0;
    double best_sim = -2;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      const double s = dot_product(v0s[i], u0s[j]);
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

template <class T>
std::vector<PairExample> corpus_pairs(const std::vector<CorpusItem>& items,
                                      const Vocabulary& vocab) {
  std::vector<PairExample> out;
  for (const auto& item : items) out.push_back({item.patches, vocab.encode(item.caption)});
  return out;
}

}  // namespace lclip
