#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "lclip/autodiff.hpp"
#include "lclip/param.hpp"
#include "lclip/rng.hpp"
#include "lclip/tokenizer.hpp"

namespace lclip {

struct EncoderConfig {
  int num_layers = 0;
  int num_shared = 0;
  int multiplex_factor = 0;  // == num_layers / num_shared
  int model_dim = 0;
  int heads = 0;
  int ffn_dim = 0;
  int max_seq_len = 0;
  int input_dim = 0;  // vision only: patch feature width

  void validate(const std::string& who) const {
    if (num_layers <= 0 || num_shared <= 0 || multiplex_factor <= 0)
      throw ConfigError(who + ": layer counts must be positive");
    if (num_layers != num_shared * multiplex_factor)
      throw ConfigError(who + ": num_layers (" + std::to_string(num_layers) +
                        ") != num_shared (" + std::to_string(num_shared) +
                        ") x multiplex_factor (" + std::to_string(multiplex_factor) + ")");
    if (model_dim <= 0 || heads <= 0 || model_dim % heads != 0)
      throw ConfigError(who + ": model_dim must be a positive multiple of heads");
    if (ffn_dim <= 0 || max_seq_len <= 0)
      throw ConfigError(who + ": ffn_dim and max_seq_len must be positive");
  }
};

// One learnable shared transformer block: attention Q/K/V/O and FFN weights
// with biases. No key bias: a uniform key shift cancels inside the softmax,
// so the parameter would be permanently gradient-dead. Layer norms live per
// instance, not here.
template <class T>
struct SharedBlockT {
  static constexpr int kTensors = 11;
  std::array<ParamT<T>, kTensors> w;  // wq bq wk wv bv wo bo w1 b1 w2 b2

  static const char* tensor_name(int i) {
    static const char* names[kTensors] = {"wq", "bq", "wk", "wv", "bv",
                                          "wo", "bo", "w1", "b1", "w2", "b2"};
    return names[i];
  }
};

// Per-instance multiplex transform: one (gamma, beta) scalar pair per shared
// tensor plus an independent layer-norm parameter set. Identity at init so a
// fresh instance reproduces the shared weights exactly.
template <class T>
struct BlockTransformT {
  std::array<ParamT<T>, SharedBlockT<T>::kTensors> gamma, beta;
  ParamT<T> ln1_g, ln1_b, ln2_g, ln2_b;
  bool has_scalars = false;  // factor 1 stacks carry no multiplex scalars
};

// View pairing one shared block with the transforms of the instances derived
// from it.
template <class T>
struct MultiplexedBlockT {
  SharedBlockT<T>* shared = nullptr;
  std::vector<BlockTransformT<T>*> instances;
};

template <class T>
struct EffectiveWeightsT {
  std::array<ad::Var<T>, SharedBlockT<T>::kTensors> w;
};

// Effective weights of one instance: transform applied to the shared tensors.
// Differentiable w.r.t. both the shared weights and the transform scalars.
template <class T>
EffectiveWeightsT<T> multiplex_expand(Graph<T>& g, const MultiplexedBlockT<T>& block,
                                      int instance) {
  if (instance < 0 || instance >= static_cast<int>(block.instances.size()))
    throw IndexError("multiplex_expand: instance " + std::to_string(instance) +
                     " out of range [0," + std::to_string(block.instances.size()) + ")");
  auto& tr = *block.instances[static_cast<std::size_t>(instance)];
  EffectiveWeightsT<T> eff;
  for (int i = 0; i < SharedBlockT<T>::kTensors; ++i) {
    auto sh = g.param(block.shared->w[static_cast<std::size_t>(i)]);
    if (tr.has_scalars)
      eff.w[static_cast<std::size_t>(i)] =
          ad::affine_scalar(sh, g.param(tr.gamma[static_cast<std::size_t>(i)]),
                            g.param(tr.beta[static_cast<std::size_t>(i)]));
    else
      eff.w[static_cast<std::size_t>(i)] = sh;
  }
  return eff;
}

// Tensor-valued expansion for inspection and tests.
template <class T>
std::array<TensorT<T>, SharedBlockT<T>::kTensors> multiplex_expand_values(
    const MultiplexedBlockT<T>& block, int instance) {
  Graph<T> g(Graph<T>::Mode::inference);
  auto eff = multiplex_expand(g, block, instance);
  std::array<TensorT<T>, SharedBlockT<T>::kTensors> out;
  for (int i = 0; i < SharedBlockT<T>::kTensors; ++i)
    out[static_cast<std::size_t>(i)] = eff.w[static_cast<std::size_t>(i)]->value;
  return out;
}

template <class T>
struct EncoderStackT {
  EncoderConfig cfg;
  std::vector<SharedBlockT<T>> shared;
  std::vector<BlockTransformT<T>> transforms;  // one per effective layer
  ParamT<T> final_ln_g, final_ln_b;

  MultiplexedBlockT<T> block(int b) {
    if (b < 0 || b >= cfg.num_shared) throw IndexError("block index out of range");
    MultiplexedBlockT<T> view;
    view.shared = &shared[static_cast<std::size_t>(b)];
    for (int i = 0; i < cfg.multiplex_factor; ++i)
      view.instances.push_back(
          &transforms[static_cast<std::size_t>(b * cfg.multiplex_factor + i)]);
    return view;
  }

  ad::Var<T> forward(Graph<T>& g, ad::Var<T> x) {
    const int hd = cfg.model_dim / cfg.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    for (int layer = 0; layer < cfg.num_layers; ++layer) {
      auto view = block(layer / cfg.multiplex_factor);
      auto eff = multiplex_expand(g, view, layer % cfg.multiplex_factor);
      auto& tr = transforms[static_cast<std::size_t>(layer)];
      auto h = ad::rms_norm_rows(x, g.param(tr.ln1_g), g.param(tr.ln1_b));
      auto q = ad::add_row_broadcast(ad::matmul(h, eff.w[0]), eff.w[1]);
      auto k = ad::matmul(h, eff.w[2]);
      auto v = ad::add_row_broadcast(ad::matmul(h, eff.w[3]), eff.w[4]);
      std::vector<ad::Var<T>> heads;
      for (int hh = 0; hh < cfg.heads; ++hh) {
        const std::size_t c0 = static_cast<std::size_t>(hh * hd), c1 = c0 + static_cast<std::size_t>(hd);
        auto qh = ad::slice_cols(q, c0, c1);
        auto kh = ad::slice_cols(k, c0, c1);
        auto vh = ad::slice_cols(v, c0, c1);
        auto att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
        heads.push_back(ad::matmul(att, vh));
      }
      auto o = ad::add_row_broadcast(ad::matmul(ad::concat_cols(heads), eff.w[5]), eff.w[6]);
      x = ad::add(x, o);
      auto h2 = ad::rms_norm_rows(x, g.param(tr.ln2_g), g.param(tr.ln2_b));
      auto f1 = ad::gelu(ad::add_row_broadcast(ad::matmul(h2, eff.w[7]), eff.w[8]));
      auto f2 = ad::add_row_broadcast(ad::matmul(f1, eff.w[9]), eff.w[10]);
      x = ad::add(x, f2);
    }
    return ad::rms_norm_rows(x, g.param(final_ln_g), g.param(final_ln_b));
  }
};

template <class T>
struct EncodeOutT {
  ad::Var<T> global;  // L2-normalized [CLS] projection
  ad::Var<T> tokens;  // per-position projections, one row per input element
};

// The compressed dual encoder: multiplexed vision and text stacks, a
// rank-decomposed token embedding on the text side, a frozen patch stem on
// the vision side, and projection heads into the joint space.
template <class T>
struct LCLIPModelT {
  EncoderConfig vision_cfg, text_cfg;
  int vocab = 0, rank = 0, joint_dim = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> build_warnings;

  ParamT<T> stem_w, stem_b;  // frozen
  ParamT<T> vis_cls, vis_pos;
  EncoderStackT<T> vision;
  ParamT<T> vis_proj;

  ParamT<T> emb_a, emb_b;  // vocab x rank, rank x model_dim
  ParamT<T> txt_cls, txt_pos;
  EncoderStackT<T> text;
  ParamT<T> txt_proj;

  // Canonical order; checkpoints and optimizers follow it.
  std::vector<ParamT<T>*> params() {
    std::vector<ParamT<T>*> out;
    auto stack_params = [&out](EncoderStackT<T>& s) {
      for (auto& blk : s.shared)
        for (auto& p : blk.w) out.push_back(&p);
      for (auto& tr : s.transforms) {
        if (tr.has_scalars)
          for (int i = 0; i < SharedBlockT<T>::kTensors; ++i) {
            out.push_back(&tr.gamma[static_cast<std::size_t>(i)]);
            out.push_back(&tr.beta[static_cast<std::size_t>(i)]);
          }
        out.push_back(&tr.ln1_g);
        out.push_back(&tr.ln1_b);
        out.push_back(&tr.ln2_g);
        out.push_back(&tr.ln2_b);
      }
      out.push_back(&s.final_ln_g);
      out.push_back(&s.final_ln_b);
    };
    out.push_back(&stem_w);
    out.push_back(&stem_b);
    out.push_back(&vis_cls);
    out.push_back(&vis_pos);
    stack_params(vision);
    out.push_back(&vis_proj);
    out.push_back(&emb_a);
    out.push_back(&emb_b);
    out.push_back(&txt_cls);
    out.push_back(&txt_pos);
    stack_params(text);
    out.push_back(&txt_proj);
    return out;
  }

  std::vector<ParamT<T>*> text_params() {
    std::vector<ParamT<T>*> all = params();
    std::vector<ParamT<T>*> out;
    for (auto* p : all)
      if (p->name.rfind("text.", 0) == 0) out.push_back(p);
    return out;
  }

  std::vector<ParamT<T>*> vision_params() {
    std::vector<ParamT<T>*> all = params();
    std::vector<ParamT<T>*> out;
    for (auto* p : all)
      if (p->name.rfind("vision.", 0) == 0) out.push_back(p);
    return out;
  }

  void set_text_frozen(bool frozen) {
    for (auto* p : text_params()) p->frozen = frozen;
  }

  EncodeOutT<T> encode_text_graph(Graph<T>& g, const std::vector<int>& token_ids) {
    if (token_ids.empty())
      throw DegenerateInputError("encode_text: empty token sequence");
    if (static_cast<int>(token_ids.size()) > text_cfg.max_seq_len)
      throw LengthError("encode_text: sequence length " + std::to_string(token_ids.size()) +
                        " exceeds max_seq_len " + std::to_string(text_cfg.max_seq_len));
    std::vector<std::size_t> ids;
    for (int t : token_ids) {
      if (t < 0 || t >= vocab)
        throw TokenizationError("encode_text: token id " + std::to_string(t) +
                                " outside vocabulary of size " + std::to_string(vocab));
      ids.push_back(static_cast<std::size_t>(t));
    }
    const std::size_t len = ids.size();
    auto emb = ad::matmul(ad::gather_rows(g.param(emb_a), ids), g.param(emb_b));
    auto cls = ad::stack_rows<T>({g.param(txt_cls)});
    auto x = ad::concat_rows<T>({cls, emb});
    x = ad::add(x, ad::slice_rows(g.param(txt_pos), 0, len + 1));
    x = text.forward(g, x);
    auto proj = g.param(txt_proj);
    EncodeOutT<T> out;
    out.global = ad::l2_normalize(ad::row_vec(ad::matmul(ad::slice_rows(x, 0, 1), proj), 0));
    out.tokens = ad::matmul(ad::slice_rows(x, 1, len + 1), proj);
    return out;
  }

  EncodeOutT<T> encode_image_graph(Graph<T>& g, const TensorT<T>& patches) {
    if (patches.rank() != 2 || static_cast<int>(patches.cols()) != vision_cfg.input_dim)
      throw DimensionError("encode_image: patches " + shape_string(patches.shape()) +
                           " do not match stem input dim " +
                           std::to_string(vision_cfg.input_dim));
    if (patches.rows() == 0) throw DegenerateInputError("encode_image: no patches");
    if (static_cast<int>(patches.rows()) > vision_cfg.max_seq_len)
      throw LengthError("encode_image: patch count exceeds max_seq_len");
    const std::size_t n = patches.rows();
    auto p = ad::add_row_broadcast(ad::matmul(g.constant(patches), g.param(stem_w)),
                                   g.param(stem_b));
    auto cls = ad::stack_rows<T>({g.param(vis_cls)});
    auto x = ad::concat_rows<T>({cls, p});
    x = ad::add(x, ad::slice_rows(g.param(vis_pos), 0, n + 1));
    x = vision.forward(g, x);
    auto proj = g.param(vis_proj);
    EncodeOutT<T> out;
    out.global = ad::l2_normalize(ad::row_vec(ad::matmul(ad::slice_rows(x, 0, 1), proj), 0));
    out.tokens = ad::matmul(ad::slice_rows(x, 1, n + 1), proj);
    return out;
  }

  // Inference wrappers: (global embedding, per-element embeddings).
  std::pair<TensorT<T>, TensorT<T>> encode_text(const std::vector<int>& token_ids) {
    Graph<T> g(Graph<T>::Mode::inference);
    auto out = encode_text_graph(g, token_ids);
    return {out.global->value, out.tokens->value};
  }

  std::pair<TensorT<T>, TensorT<T>> encode_image(const TensorT<T>& patches) {
    Graph<T> g(Graph<T>::Mode::inference);
    auto out = encode_image_graph(g, patches);
    return {out.global->value, out.tokens->value};
  }
};

namespace detail {

template <class T>
void init_stack(EncoderStackT<T>& s, const EncoderConfig& cfg, const std::string& prefix,
                Rng& rng) {
  s.cfg = cfg;
  const auto d = static_cast<std::size_t>(cfg.model_dim);
  const auto f = static_cast<std::size_t>(cfg.ffn_dim);
  const T w_std = T(0.2) / std::sqrt(static_cast<T>(cfg.model_dim));
  s.shared.resize(static_cast<std::size_t>(cfg.num_shared));
  for (int b = 0; b < cfg.num_shared; ++b) {
    auto& blk = s.shared[static_cast<std::size_t>(b)];
    const std::string bp = prefix + ".shared" + std::to_string(b) + ".";
    const Shape shapes[SharedBlockT<T>::kTensors] = {
        {d, d}, {d}, {d, d}, {d, d}, {d}, {d, d}, {d}, {d, f}, {f}, {f, d}, {d}};
    for (int i = 0; i < SharedBlockT<T>::kTensors; ++i) {
      const bool is_bias = shapes[i].size() == 1;
      TensorT<T> t = is_bias ? TensorT<T>::zeros(shapes[i])
                             : TensorT<T>::normal(shapes[i], rng, w_std);
      blk.w[static_cast<std::size_t>(i)] =
          ParamT<T>(bp + SharedBlockT<T>::tensor_name(i), std::move(t));
    }
  }
  s.transforms.resize(static_cast<std::size_t>(cfg.num_layers));
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& tr = s.transforms[static_cast<std::size_t>(l)];
    const std::string lp = prefix + ".layer" + std::to_string(l) + ".";
    tr.has_scalars = cfg.multiplex_factor > 1;
    if (tr.has_scalars)
      for (int i = 0; i < SharedBlockT<T>::kTensors; ++i) {
        tr.gamma[static_cast<std::size_t>(i)] = ParamT<T>(
            lp + "gamma." + SharedBlockT<T>::tensor_name(i), TensorT<T>::full({}, T(1)));
        tr.beta[static_cast<std::size_t>(i)] = ParamT<T>(
            lp + "beta." + SharedBlockT<T>::tensor_name(i), TensorT<T>::full({}, T(0)));
      }
    tr.ln1_g = ParamT<T>(lp + "ln1_g", TensorT<T>::full(Shape{d}, T(1)));
    tr.ln1_b = ParamT<T>(lp + "ln1_b", TensorT<T>::zeros(Shape{d}));
    tr.ln2_g = ParamT<T>(lp + "ln2_g", TensorT<T>::full(Shape{d}, T(1)));
    tr.ln2_b = ParamT<T>(lp + "ln2_b", TensorT<T>::zeros(Shape{d}));
  }
  s.final_ln_g = ParamT<T>(prefix + ".final_ln_g", TensorT<T>::full(Shape{d}, T(1)));
  s.final_ln_b = ParamT<T>(prefix + ".final_ln_b", TensorT<T>::zeros(Shape{d}));
}

}  // namespace detail

// Deterministic build: identical seed gives bit-identical parameters. Dropout
// is 0 everywhere by construction (there is no dropout path at all).
template <class T>
LCLIPModelT<T> build_model(const EncoderConfig& vision_cfg, const EncoderConfig& text_cfg,
                           int vocab, int rank, int joint_dim, std::uint64_t seed) {
  vision_cfg.validate("vision config");
  text_cfg.validate("text config");
  if (vision_cfg.input_dim <= 0)
    throw ConfigError("vision config: input_dim (patch width) must be positive");
  if (vocab <= 0 || joint_dim <= 0) throw ConfigError("vocab and joint_dim must be positive");
  if (rank < 1 || rank > std::min(vocab, text_cfg.model_dim))
    throw ConfigError("rank " + std::to_string(rank) + " must lie in [1, min(vocab, text d) = " +
                      std::to_string(std::min(vocab, text_cfg.model_dim)) + "]");

  LCLIPModelT<T> m;
  m.vision_cfg = vision_cfg;
  m.text_cfg = text_cfg;
  m.vocab = vocab;
  m.rank = rank;
  m.joint_dim = joint_dim;
  m.seed = seed;

  const long dec = static_cast<long>(vocab) * rank + static_cast<long>(rank) * text_cfg.model_dim;
  const long full = static_cast<long>(vocab) * text_cfg.model_dim;
  if (dec >= full)
    m.build_warnings.push_back("decomposed embedding (" + std::to_string(dec) +
                               " params) is not smaller than the full matrix (" +
                               std::to_string(full) + "); rank " + std::to_string(rank) +
                               " gives no compression");

  Rng rng(derive_seed(seed, 0xEC0DE));
  const auto vd = static_cast<std::size_t>(vision_cfg.model_dim);
  const auto td = static_cast<std::size_t>(text_cfg.model_dim);
  const auto jd = static_cast<std::size_t>(joint_dim);

  m.stem_w = ParamT<T>("vision.stem_w",
                       TensorT<T>::normal(Shape{static_cast<std::size_t>(vision_cfg.input_dim), vd},
                                          rng, T(1) / std::sqrt(static_cast<T>(vision_cfg.input_dim))),
                       /*frozen=*/true);
  m.stem_b = ParamT<T>("vision.stem_b", TensorT<T>::normal(Shape{vd}, rng, T(0.01)),
                       /*frozen=*/true);
  m.vis_cls = ParamT<T>("vision.cls", TensorT<T>::normal(Shape{vd}, rng, T(0.1)));
  m.vis_pos = ParamT<T>("vision.pos",
                        TensorT<T>::normal(Shape{static_cast<std::size_t>(vision_cfg.max_seq_len) + 1, vd},
                                           rng, T(0.1)));
  detail::init_stack(m.vision, vision_cfg, "vision.blocks", rng);
  m.vis_proj = ParamT<T>("vision.proj",
                         TensorT<T>::normal(Shape{vd, jd}, rng,
                                            T(1) / std::sqrt(static_cast<T>(vision_cfg.model_dim))));

  m.emb_a = ParamT<T>("text.emb_a",
                      TensorT<T>::normal(Shape{static_cast<std::size_t>(vocab),
                                               static_cast<std::size_t>(rank)},
                                         rng, T(0.1)));
  m.emb_b = ParamT<T>("text.emb_b",
                      TensorT<T>::normal(Shape{static_cast<std::size_t>(rank), td}, rng, T(0.1)));
  m.txt_cls = ParamT<T>("text.cls", TensorT<T>::normal(Shape{td}, rng, T(0.1)));
  m.txt_pos = ParamT<T>("text.pos",
                        TensorT<T>::normal(Shape{static_cast<std::size_t>(text_cfg.max_seq_len) + 1, td},
                                           rng, T(0.1)));
  detail::init_stack(m.text, text_cfg, "text.blocks", rng);
  m.txt_proj = ParamT<T>("text.proj",
                         TensorT<T>::normal(Shape{td, jd}, rng,
                                            T(1) / std::sqrt(static_cast<T>(text_cfg.model_dim))));
  return m;
}

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

struct ParamCountEntry {
  long trainable = 0;
  long frozen = 0;
  long total() const { return trainable + frozen; }
};

struct ParamCount {
  std::map<std::string, ParamCountEntry> components;
  ParamCountEntry total;
};

inline long full_embedding_params(long vocab, long dim) { return vocab * dim; }

inline long decomposed_embedding_params(long vocab, long rank, long dim) {
  return vocab * rank + rank * dim;
}

namespace detail {

// Component key: first two dotted segments ("vision.blocks", "text.emb_a", ...).
inline std::string component_of(const std::string& name) {
  std::size_t first = name.find('.');
  if (first == std::string::npos) return name;
  std::size_t second = name.find('.', first + 1);
  return second == std::string::npos ? name : name.substr(0, second);
}

}  // namespace detail

template <class T>
ParamCount parameter_count(const std::vector<ParamT<T>*>& params) {
  ParamCount pc;
  for (const auto* p : params) {
    auto& e = pc.components[detail::component_of(p->name)];
    const long n = static_cast<long>(p->numel());
    if (p->frozen || !p->trainable) {
      e.frozen += n;
      pc.total.frozen += n;
    } else {
      e.trainable += n;
      pc.total.trainable += n;
    }
  }
  return pc;
}

template <class T>
ParamCount parameter_count(LCLIPModelT<T>& model) {
  return parameter_count(model.params());
}

template <class T>
ParamCount parameter_count(EncoderStackT<T>& stack) {
  std::vector<ParamT<T>*> ps;
  for (auto& blk : stack.shared)
    for (auto& p : blk.w) ps.push_back(&p);
  for (auto& tr : stack.transforms) {
    if (tr.has_scalars)
      for (int i = 0; i < SharedBlockT<T>::kTensors; ++i) {
        ps.push_back(&tr.gamma[static_cast<std::size_t>(i)]);
        ps.push_back(&tr.beta[static_cast<std::size_t>(i)]);
      }
    ps.push_back(&tr.ln1_g);
    ps.push_back(&tr.ln1_b);
    ps.push_back(&tr.ln2_g);
    ps.push_back(&tr.ln2_b);
  }
  ps.push_back(&stack.final_ln_g);
  ps.push_back(&stack.final_ln_b);
  return parameter_count(ps);
}

}  // namespace lclip
