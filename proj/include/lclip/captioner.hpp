#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lclip/cider.hpp"
#include "lclip/metric.hpp"
#include "lclip/param.hpp"
#include "lclip/rng.hpp"
#include "lclip/tokenizer.hpp"

namespace lclip {

struct CaptionerConfig {
  int layers = 2;
  int dim = 32;
  int heads = 2;
  int ffn_dim = 64;
  int vocab = 0;
  int max_len = 12;     // positions including BOS
  int feature_dim = 0;  // width of the visual feature rows
  int bos = Vocabulary::kBos;
  int eos = Vocabulary::kEos;
  int pad = Vocabulary::kPad;
  std::uint64_t seed = 0;

  void validate() const {
    if (layers <= 0 || dim <= 0 || heads <= 0 || ffn_dim <= 0 || dim % heads != 0)
      throw ConfigError("captioner config: bad transformer dimensions");
    if (vocab <= 0 || feature_dim <= 0)
      throw ConfigError("captioner config: vocab and feature_dim must be positive");
    if (max_len < 2) throw ConfigError("captioner config: max_len must be >= 2");
    if (bos == eos || bos == pad || eos == pad || bos >= vocab || eos >= vocab || pad >= vocab ||
        bos < 0 || eos < 0 || pad < 0)
      throw ConfigError("captioner config: special token ids must be distinct and < vocab");
  }
};

// Toy autoregressive captioning transformer: causal self-attention over the
// token prefix plus cross-attention into the visual feature rows.
template <class T>
struct CaptionerT {
  struct Layer {
    ParamT<T> ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    ParamT<T> sq, sk, sv, so, sbo;      // self-attention
    ParamT<T> cq, ck, cv, co, cbo;      // cross-attention
    ParamT<T> w1, b1, w2, b2;           // ffn
  };

  CaptionerConfig cfg;
  ParamT<T> tok_emb, pos_emb;
  ParamT<T> feat_w, feat_b;
  std::vector<Layer> layers;
  ParamT<T> final_ln_g, final_ln_b;
  ParamT<T> out_w, out_b;

  std::vector<ParamT<T>*> params() {
    std::vector<ParamT<T>*> out = {&tok_emb, &pos_emb, &feat_w, &feat_b};
    for (auto& l : layers) {
      for (auto* p : {&l.ln1_g, &l.ln1_b, &l.sq, &l.sk, &l.sv, &l.so, &l.sbo,
                      &l.ln2_g, &l.ln2_b, &l.cq, &l.ck, &l.cv, &l.co, &l.cbo,
                      &l.ln3_g, &l.ln3_b, &l.w1, &l.b1, &l.w2, &l.b2})
        out.push_back(p);
    }
    out.push_back(&final_ln_g);
    out.push_back(&final_ln_b);
    out.push_back(&out_w);
    out.push_back(&out_b);
    return out;
  }

  // Logits for every input position (position t predicts token t+1 of the
  // sequence fed as input).
  ad::Var<T> forward_logits(Graph<T>& g, const TensorT<T>& features,
                            const std::vector<int>& input_ids) {
    if (input_ids.empty()) throw DegenerateInputError("captioner: empty input");
    if (static_cast<int>(input_ids.size()) > cfg.max_len)
      throw LengthError("captioner: input length " + std::to_string(input_ids.size()) +
                        " exceeds max_len " + std::to_string(cfg.max_len));
    if (features.rank() != 2 || static_cast<int>(features.cols()) != cfg.feature_dim)
      throw DimensionError("captioner: features " + shape_string(features.shape()) +
                           " do not match feature_dim " + std::to_string(cfg.feature_dim));
    std::vector<std::size_t> ids;
    for (int t : input_ids) {
      if (t < 0 || t >= cfg.vocab)
        throw TokenizationError("captioner: token id " + std::to_string(t) + " out of vocab");
      ids.push_back(static_cast<std::size_t>(t));
    }
    const std::size_t s = ids.size();
    const int hd = cfg.dim / cfg.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));

    TensorT<T> causal(Shape{s, s});
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = i + 1; j < s; ++j) causal(i, j) = T(-1e9);
    auto mask = g.constant(causal);

    auto x = ad::add(ad::gather_rows(g.param(tok_emb), ids),
                     ad::slice_rows(g.param(pos_emb), 0, s));
    auto feat = ad::add_row_broadcast(ad::matmul(g.constant(features), g.param(feat_w)),
                                      g.param(feat_b));
    auto attend = [&](ad::Var<T> q_in, ad::Var<T> kv_in, ParamT<T>& wq, ParamT<T>& wk,
                      ParamT<T>& wv, ParamT<T>& wo, ParamT<T>& wbo, bool masked) {
      auto q = ad::matmul(q_in, g.param(wq));
      auto k = ad::matmul(kv_in, g.param(wk));
      auto v = ad::matmul(kv_in, g.param(wv));
      std::vector<ad::Var<T>> heads;
      for (int hh = 0; hh < cfg.heads; ++hh) {
        const std::size_t c0 = static_cast<std::size_t>(hh * hd), c1 = c0 + static_cast<std::size_t>(hd);
        auto scores = ad::scale(ad::matmul(ad::slice_cols(q, c0, c1),
                                           ad::transpose(ad::slice_cols(k, c0, c1))),
                                scale);
        if (masked) scores = ad::add(scores, mask);
        heads.push_back(ad::matmul(ad::softmax_rows(scores), ad::slice_cols(v, c0, c1)));
      }
      return ad::add_row_broadcast(ad::matmul(ad::concat_cols(heads), g.param(wo)), g.param(wbo));
    };

    for (auto& l : layers) {
      x = ad::add(x, attend(ad::rms_norm_rows(x, g.param(l.ln1_g), g.param(l.ln1_b)), x,
                            l.sq, l.sk, l.sv, l.so, l.sbo, true));
      // Cross-attention re-normalizes the query side only; K/V come from the
      // projected feature rows.
      auto h2 = ad::rms_norm_rows(x, g.param(l.ln2_g), g.param(l.ln2_b));
      x = ad::add(x, attend(h2, feat, l.cq, l.ck, l.cv, l.co, l.cbo, false));
      auto h3 = ad::rms_norm_rows(x, g.param(l.ln3_g), g.param(l.ln3_b));
      auto f = ad::add_row_broadcast(
          ad::matmul(ad::gelu(ad::add_row_broadcast(ad::matmul(h3, g.param(l.w1)), g.param(l.b1))),
                     g.param(l.w2)),
          g.param(l.b2));
      x = ad::add(x, f);
    }
    x = ad::rms_norm_rows(x, g.param(final_ln_g), g.param(final_ln_b));
    return ad::add_row_broadcast(ad::matmul(x, g.param(out_w)), g.param(out_b));
  }
};

template <class T>
CaptionerT<T> build_captioner(const CaptionerConfig& cfg) {
  cfg.validate();
  CaptionerT<T> m;
  m.cfg = cfg;
  Rng rng(derive_seed(cfg.seed, 0xCA97));
  const auto d = static_cast<std::size_t>(cfg.dim);
  const auto f = static_cast<std::size_t>(cfg.ffn_dim);
  const auto v = static_cast<std::size_t>(cfg.vocab);
  const T w_std = T(0.5) / std::sqrt(static_cast<T>(cfg.dim));
  auto weight = [&](const char* name, Shape shape) {
    return ParamT<T>(name, TensorT<T>::normal(std::move(shape), rng, w_std));
  };
  auto zeros = [&](const char* name, Shape shape) {
    return ParamT<T>(name, TensorT<T>::zeros(std::move(shape)));
  };
  auto ones = [&](const char* name, Shape shape) {
    return ParamT<T>(name, TensorT<T>::full(std::move(shape), T(1)));
  };
  m.tok_emb = ParamT<T>("cap.tok_emb", TensorT<T>::normal(Shape{v, d}, rng, T(0.1)));
  m.pos_emb = ParamT<T>("cap.pos_emb",
                        TensorT<T>::normal(Shape{static_cast<std::size_t>(cfg.max_len), d}, rng, T(0.1)));
  m.feat_w = weight("cap.feat_w", Shape{static_cast<std::size_t>(cfg.feature_dim), d});
  m.feat_b = zeros("cap.feat_b", Shape{d});
  m.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& l : m.layers) {
    l.ln1_g = ones("cap.ln1_g", Shape{d});
    l.ln1_b = zeros("cap.ln1_b", Shape{d});
    l.ln2_g = ones("cap.ln2_g", Shape{d});
    l.ln2_b = zeros("cap.ln2_b", Shape{d});
    l.ln3_g = ones("cap.ln3_g", Shape{d});
    l.ln3_b = zeros("cap.ln3_b", Shape{d});
    l.sq = weight("cap.sq", Shape{d, d});
    l.sk = weight("cap.sk", Shape{d, d});
    l.sv = weight("cap.sv", Shape{d, d});
    l.so = weight("cap.so", Shape{d, d});
    l.sbo = zeros("cap.sbo", Shape{d});
    l.cq = weight("cap.cq", Shape{d, d});
    l.ck = weight("cap.ck", Shape{d, d});
    l.cv = weight("cap.cv", Shape{d, d});
    l.co = weight("cap.co", Shape{d, d});
    l.cbo = zeros("cap.cbo", Shape{d});
    l.w1 = weight("cap.w1", Shape{d, f});
    l.b1 = zeros("cap.b1", Shape{f});
    l.w2 = weight("cap.w2", Shape{f, d});
    l.b2 = zeros("cap.b2", Shape{d});
  }
  m.final_ln_g = ones("cap.final_ln_g", Shape{d});
  m.final_ln_b = zeros("cap.final_ln_b", Shape{d});
  m.out_w = weight("cap.out_w", Shape{d, v});
  m.out_b = zeros("cap.out_b", Shape{v});
  // Unique names for checkpointing.
  int i = 0;
  for (auto* p : m.params()) p->name = "cap." + std::to_string(i++) + "." + p->name.substr(4);
  return m;
}

// Next-token distribution after the given prefix (Eq.-style autoregressive
// factorization). The prefix must start with BOS and leave room to emit.
template <class T>
TensorT<T> caption_forward(CaptionerT<T>& model, const Tensor& features,
                           const std::vector<int>& prefix) {
  if (prefix.empty() || prefix[0] != model.cfg.bos)
    throw PreconditionError("caption_forward: prefix must begin with BOS");
  if (static_cast<int>(prefix.size()) >= model.cfg.max_len)
    throw LengthError("caption_forward: prefix length " + std::to_string(prefix.size()) +
                      " leaves no room under max_len " + std::to_string(model.cfg.max_len));
  Graph<T> g(Graph<T>::Mode::inference);
  auto logits = model.forward_logits(g, features.template cast<T>(), prefix);
  auto probs = ad::softmax_rows(logits);
  const std::size_t last = prefix.size() - 1;
  TensorT<T> out(Shape{static_cast<std::size_t>(model.cfg.vocab)});
  for (std::size_t j = 0; j < out.numel(); ++j) out[j] = probs->value(last, j);
  return out;
}

// Mean NLL of gold positions given per-position log-probability rows.
// Exposed separately so the loss core is testable against hand
// distributions.
template <class T>
ad::Var<T> mean_nll(const ad::Var<T>& logprob_rows, const std::vector<std::size_t>& gold) {
  return ad::scale(ad::sum(ad::gather_per_row(logprob_rows, gold)),
                   T(-1) / static_cast<T>(gold.size()));
}

// Cross-entropy loss of a gold caption (terminated by EOS, optionally padded
// afterwards). Mean NLL over non-pad gold positions.
template <class T>
ad::Var<T> xe_loss_graph(Graph<T>& g, CaptionerT<T>& model, const Tensor& features,
                         const std::vector<int>& gold) {
  if (gold.empty()) throw DataError("xe_loss: empty gold caption");
  std::vector<int> effective;
  bool seen_pad = false;
  bool seen_eos = false;
  for (int t : gold) {
    if (t == model.cfg.pad) {
      seen_pad = true;
      continue;
    }
    if (seen_pad) throw DataError("xe_loss: pad token in mid-sequence");
    effective.push_back(t);
    if (t == model.cfg.eos) {
      seen_eos = true;
      break;
    }
  }
  if (!seen_eos) throw DataError("xe_loss: gold caption is not terminated by EOS");
  if (static_cast<int>(effective.size()) + 1 > model.cfg.max_len)
    throw LengthError("xe_loss: gold caption longer than max_len");
  std::vector<int> input = {model.cfg.bos};
  input.insert(input.end(), effective.begin(), effective.end() - 1);
  std::vector<std::size_t> targets;
  for (int t : effective) targets.push_back(static_cast<std::size_t>(t));
  auto logits = model.forward_logits(g, features.template cast<T>(), input);
  return mean_nll(ad::log_softmax_rows(logits), targets);
}

template <class T>
double xe_loss(CaptionerT<T>& model, const Tensor& features, const std::vector<int>& gold) {
  Graph<T> g(Graph<T>::Mode::inference);
  return static_cast<double>(xe_loss_graph(g, model, features, gold)->value.item());
}

enum class SampleMode { greedy, multinomial };

struct SampledCaption {
  std::vector<int> tokens;      // emitted tokens, EOS included when reached
  std::vector<double> logps;    // log-prob of each emitted token
  bool ended_with_eos = false;

  double sum_logp() const {
    double s = 0;
    for (double l : logps) s += l;
    return s;
  }
};

// Autoregressive decoding: greedy is deterministic (ties to the lowest id),
// multinomial is deterministic given the seed. Stops at EOS or when max_len
// positions are filled.
template <class T>
SampledCaption sample_caption(CaptionerT<T>& model, const Tensor& features, SampleMode mode,
                              std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5A3F1E));
  SampledCaption out;
  std::vector<int> prefix = {model.cfg.bos};
  while (static_cast<int>(prefix.size()) < model.cfg.max_len) {
    const TensorT<T> dist = caption_forward(model, features, prefix);
    int pick = 0;
    if (mode == SampleMode::greedy) {
      for (std::size_t j = 1; j < dist.numel(); ++j)
        if (dist[j] > dist[static_cast<std::size_t>(pick)]) pick = static_cast<int>(j);
    } else {
      const double u = rng.uniform();
      double acc = 0;
      pick = static_cast<int>(dist.numel()) - 1;
      for (std::size_t j = 0; j < dist.numel(); ++j) {
        acc += static_cast<double>(dist[j]);
        if (u < acc) {
          pick = static_cast<int>(j);
          break;
        }
      }
    }
    out.tokens.push_back(pick);
    out.logps.push_back(std::log(static_cast<double>(dist[static_cast<std::size_t>(pick)])));
    prefix.push_back(pick);
    if (pick == model.cfg.eos) {
      out.ended_with_eos = true;
      break;
    }
  }
  return out;
}

// 1 - distinct/total over unigrams, special tokens removed. Diagnostic for
// the repeated-visual-token failure mode of embedding-only rewards.
inline double repetition_rate(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return 0.0;
  std::unordered_map<std::string, bool> seen;
  for (const auto& t : tokens) seen[t] = true;
  return 1.0 - static_cast<double>(seen.size()) / static_cast<double>(tokens.size());
}

// ---------------------------------------------------------------------------
// Mixed reward
// ---------------------------------------------------------------------------

struct RewardConfig {
  double alpha = 0.5;      // weight on the embedding metric
  bool use_refs = false;   // RefL variant for the embedding term
  double w = 2.5;
  bool normalize = false;  // rescale both terms to [0,1] (ablation flag)

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw ConfigError("reward config: alpha must lie in [0,1], got " + std::to_string(alpha));
  }
};

using EmbedFn = std::function<Tensor(const std::vector<std::string>& tokens)>;

// (1-alpha) * CIDEr-D + alpha * embedding metric. Exact passthrough at the
// endpoints so alpha 0 and 1 reproduce the pure rewards bit-for-bit.
inline double mixed_reward(const std::vector<std::string>& candidate,
                           const std::vector<std::vector<std::string>>& refs, const Tensor& image_emb,
                           const EmbedFn& u0_fn, const CorpusIDF& idf, const RewardConfig& cfg) {
  cfg.validate();
  if (refs.empty() && (cfg.alpha < 1.0 || cfg.use_refs))
    throw PreconditionError("mixed_reward: references required");
  auto cider_term = [&]() {
    const double c = cider_d(candidate, refs, idf);
    return cfg.normalize ? c / 10.0 : c;
  };
  auto metric_term = [&]() {
    if (candidate.empty()) return 0.0;
    const Tensor u0 = u0_fn(candidate);
    double m;
    if (cfg.use_refs) {
      std::vector<Tensor> ref_embs;
      for (const auto& r : refs) ref_embs.push_back(u0_fn(r));
      m = ref_l_clipscore(u0, ref_embs, image_emb, MetricConfig{.w = cfg.w});
    } else {
      m = l_clipscore(image_emb, u0, cfg.w);
    }
    return cfg.normalize ? m / cfg.w : m;
  };
  if (cfg.alpha == 0.0) return cider_term();
  if (cfg.alpha == 1.0) return metric_term();
  return (1.0 - cfg.alpha) * cider_term() + cfg.alpha * metric_term();
}

// ---------------------------------------------------------------------------
// SCST
// ---------------------------------------------------------------------------

struct ScstStats {
  double loss = 0;
  double mean_reward_sampled = 0;
  double mean_reward_greedy = 0;
};

using RewardFn = std::function<double(std::size_t item, const std::vector<int>& tokens)>;

// One self-critical step over a batch: advantage = r(sampled) - r(greedy),
// gradients flow through the sampled sequence log-probs only. Gradients are
// accumulated into the model params; the caller owns the optimizer step.
template <class T>
ScstStats scst_step(CaptionerT<T>& model, const std::vector<Tensor>& feature_batch,
                    const RewardFn& reward_fn, std::uint64_t seed) {
  if (feature_batch.empty()) throw PreconditionError("scst_step: empty batch");
  ScstStats stats;
  std::vector<SampledCaption> sampled;
  std::vector<double> advantages;
  for (std::size_t b = 0; b < feature_batch.size(); ++b) {
    SampledCaption s = sample_caption(model, feature_batch[b], SampleMode::multinomial,
                                      derive_seed(seed, b));
    const SampledCaption g = sample_caption(model, feature_batch[b], SampleMode::greedy, 0);
    double rs, rg;
    try {
      rs = reward_fn(b, s.tokens);
      rg = reward_fn(b, g.tokens);
    } catch (const std::exception& e) {
      throw TrainingError("scst_step: reward failed on item " + std::to_string(b) + ": " +
                          e.what(), static_cast<long>(b));
    }
    stats.mean_reward_sampled += rs;
    stats.mean_reward_greedy += rg;
    advantages.push_back(rs - rg);
    sampled.push_back(std::move(s));
  }
  const auto bsz = static_cast<double>(feature_batch.size());
  stats.mean_reward_sampled /= bsz;
  stats.mean_reward_greedy /= bsz;

  auto params = model.params();
  zero_grads(params);
  Graph<T> g;
  std::vector<ad::Var<T>> terms;
  for (std::size_t b = 0; b < feature_batch.size(); ++b) {
    const auto& toks = sampled[b].tokens;
    if (toks.empty()) {
      terms.push_back(g.constant(TensorT<T>::scalar(T(0))));
      continue;
    }
    std::vector<int> input = {model.cfg.bos};
    input.insert(input.end(), toks.begin(), toks.end() - 1);
    std::vector<std::size_t> targets;
    for (int t : toks) targets.push_back(static_cast<std::size_t>(t));
    auto logits = model.forward_logits(g, feature_batch[b].template cast<T>(), input);
    auto sumlog = ad::sum(ad::gather_per_row(ad::log_softmax_rows(logits), targets));
    terms.push_back(ad::scale(sumlog, static_cast<T>(-advantages[b])));
  }
  auto loss = ad::scale(ad::add_n(terms), T(1) / static_cast<T>(bsz));
  stats.loss = static_cast<double>(loss->value.item());
  if (!std::isfinite(stats.loss))
    throw TrainingError("scst_step: non-finite loss", 0);
  g.backward(loss);
  return stats;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct CaptionTask {
  Tensor features;
  std::vector<int> gold;                              // ids, EOS-terminated
  std::vector<std::vector<std::string>> ref_tokens;   // references as word tokens
  Tensor scorer_v0;                                   // image embedding for the reward
};

struct XeConfig {
  int epochs = 10;
  double learning_rate = 5e-4;
  double lr_decay = 0.8;
  int decay_every = 3;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct LossRowXE {
  long step = 0;
  double loss = 0;
};

template <class T>
std::vector<LossRowXE> train_captioner_xe(CaptionerT<T>& model,
                                          const std::vector<CaptionTask>& tasks,
                                          const XeConfig& cfg) {
  if (tasks.empty()) throw PreconditionError("train_captioner_xe: no tasks");
  auto params = model.params();
  Adam<T> opt({.lr = cfg.learning_rate});
  Rng order(derive_seed(cfg.seed, 0x3E01));
  std::vector<LossRowXE> rows;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0 && cfg.decay_every > 0 && epoch % cfg.decay_every == 0)
      opt.options().lr *= cfg.lr_decay;
    std::vector<std::size_t> idx(tasks.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    order.shuffle(idx.begin(), idx.end());
    for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(cfg.batch_size));
      zero_grads(params);
      Graph<T> g;
      std::vector<ad::Var<T>> terms;
      for (std::size_t i = at; i < end; ++i)
        terms.push_back(xe_loss_graph(g, model, tasks[idx[i]].features, tasks[idx[i]].gold));
      auto loss = ad::scale(ad::add_n(terms), T(1) / static_cast<T>(end - at));
      const double lv = static_cast<double>(loss->value.item());
      if (!std::isfinite(lv)) throw TrainingError("xe training diverged at step " +
                                                  std::to_string(step), step);
      g.backward(loss);
      opt.step(params);
      rows.push_back({step++, lv});
    }
  }
  return rows;
}

struct ScstConfig {
  int epochs = 10;
  double learning_rate = 1e-5;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct ScstLogRow {
  int epoch = 0;
  double mean_reward_sampled = 0;
  double mean_reward_greedy = 0;
  double cider = 0;
  double lclipscore = 0;
  double repetition = 0;
};

// Per-epoch greedy evaluation on a probe subset; CIDEr-D, the embedding
// metric and the repetition diagnostic are always reported no matter which
// reward is being optimized.
template <class T>
ScstLogRow evaluate_captioner(CaptionerT<T>& model, const std::vector<CaptionTask>& tasks,
                              const Vocabulary& vocab, const CorpusIDF& idf, const EmbedFn& u0_fn,
                              double w, std::size_t max_items = 32) {
  ScstLogRow row;
  const std::size_t n = std::min(max_items, tasks.size());
  for (std::size_t i = 0; i < n; ++i) {
    const SampledCaption g = sample_caption(model, tasks[i].features, SampleMode::greedy, 0);
    std::vector<std::string> words;
    for (int t : g.tokens)
      if (t != model.cfg.bos && t != model.cfg.eos && t != model.cfg.pad)
        words.push_back(vocab.word(t));
    row.cider += cider_d(words, tasks[i].ref_tokens, idf);
    row.repetition += repetition_rate(words);
    if (!words.empty()) row.lclipscore += l_clipscore(tasks[i].scorer_v0, u0_fn(words), w);
  }
  row.cider /= static_cast<double>(n);
  row.repetition /= static_cast<double>(n);
  row.lclipscore /= static_cast<double>(n);
  return row;
}

template <class T>
std::vector<ScstLogRow> train_captioner_scst(CaptionerT<T>& model,
                                             const std::vector<CaptionTask>& tasks,
                                             const Vocabulary& vocab, const CorpusIDF& idf,
                                             const EmbedFn& u0_fn, const RewardConfig& reward_cfg,
                                             const ScstConfig& cfg) {
  if (tasks.empty()) throw PreconditionError("train_captioner_scst: no tasks");
  reward_cfg.validate();
  auto params = model.params();
  Adam<T> opt({.lr = cfg.learning_rate});
  Rng order(derive_seed(cfg.seed, 0x5C57));
  std::vector<ScstLogRow> log;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> idx(tasks.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    order.shuffle(idx.begin(), idx.end());
    double rs = 0, rg = 0;
    long batches = 0;
    for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Tensor> features;
      std::vector<const CaptionTask*> batch_tasks;
      for (std::size_t i = at; i < end; ++i) {
        features.push_back(tasks[idx[i]].features);
        batch_tasks.push_back(&tasks[idx[i]]);
      }
      RewardFn reward = [&](std::size_t b, const std::vector<int>& toks) {
        std::vector<std::string> words;
        for (int t : toks)
          if (t != model.cfg.bos && t != model.cfg.eos && t != model.cfg.pad)
            words.push_back(vocab.word(t));
        return mixed_reward(words, batch_tasks[b]->ref_tokens, batch_tasks[b]->scorer_v0, u0_fn,
                            idf, reward_cfg);
      };
      const ScstStats stats = scst_step(model, features, reward, derive_seed(cfg.seed, 7919 + static_cast<std::uint64_t>(step)));
      opt.step(params);
      rs += stats.mean_reward_sampled;
      rg += stats.mean_reward_greedy;
      ++batches;
      ++step;
    }
    ScstLogRow row = evaluate_captioner(model, tasks, vocab, idf, u0_fn, reward_cfg.w);
    row.epoch = epoch;
    row.mean_reward_sampled = rs / static_cast<double>(batches);
    row.mean_reward_greedy = rg / static_cast<double>(batches);
    log.push_back(row);
  }
  return log;
}

}  // namespace lclip
