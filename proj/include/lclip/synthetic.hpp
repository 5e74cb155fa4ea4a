#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lclip/dual_encoder.hpp"
#include "lclip/rng.hpp"
#include "lclip/tensor.hpp"
#include "lclip/tokenizer.hpp"

namespace lclip {

inline constexpr int kCorpusGeneratorVersion = 1;

// Latent world behind the planted corpus. Every item picks one attribute per
// slot; captions render the attributes through grammatical templates and
// images are noisy linear renderings of the same latent. One extra latent
// axis carries "syntax" mass: grammar, filler and pad tokens land there, and
// images never do.
struct WorldSpec {
  int n_slots = 3;
  int slot_size = 8;
  int n_patches = 8;
  int patch_dim = 32;
  double noise = 0.05;
  double syntax_weight = 0.25;
  int text_window = 12;  // teacher pads/truncates captions to this many tokens
  std::uint64_t seed = 0;

  std::vector<std::vector<std::string>> slot_words;

  int latent_dim() const { return n_slots * slot_size + 1; }
  int syntax_axis() const { return n_slots * slot_size; }
  int attr_axis(int slot, int choice) const { return slot * slot_size + choice; }

  static std::vector<std::string> base_words(int slot, int count) {
    static const std::vector<std::vector<std::string>> base = {
        {"red", "blue", "green", "small", "big", "old", "new", "dark"},
        {"cat", "dog", "bird", "car", "tree", "boat", "fish", "house"},
        {"runs", "sits", "jumps", "sleeps", "flies", "waits", "spins", "floats"},
        {"quickly", "slowly", "quietly", "loudly", "calmly", "badly", "gently", "early"}};
    std::vector<std::string> words;
    for (int i = 0; i < count; ++i) {
      if (slot < static_cast<int>(base.size()) && i < static_cast<int>(base[slot].size()))
        words.push_back(base[static_cast<std::size_t>(slot)][static_cast<std::size_t>(i)]);
      else
        words.push_back("w" + std::to_string(slot) + "_" + std::to_string(i));
    }
    return words;
  }
};

struct CorpusItem {
  std::vector<int> attrs;  // chosen attribute index per slot
  Tensor patches;          // n_patches x patch_dim
  std::string caption;     // gold rendering
  std::vector<std::string> refs;  // templated paraphrases
};

struct PlantedCorpus {
  int generator_version = kCorpusGeneratorVersion;
  WorldSpec world;
  Tensor render_basis;  // patch_dim x latent_dim, orthonormal columns
  std::vector<CorpusItem> train, heldout;
  Vocabulary vocab;

  const CorpusItem& item(std::size_t i) const {
    return i < train.size() ? train[i] : heldout[i - train.size()];
  }
  std::size_t size() const { return train.size() + heldout.size(); }
};

namespace detail {

// Orthonormal columns via Gram-Schmidt on a seeded Gaussian matrix.
inline Tensor orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
  if (cols > rows) throw ConfigError("orthonormal_columns: need rows >= cols");
  std::vector<Tensor> basis;
  while (basis.size() < cols) {
    Tensor v = Tensor::normal(Shape{rows}, rng, 1.0);
    for (const Tensor& b : basis) {
      const double d = dot_product(v, b);
      for (std::size_t i = 0; i < rows; ++i) v[i] -= d * b[i];
    }
    const double n = v.norm2();
    if (n < 1e-6) continue;
    for (std::size_t i = 0; i < rows; ++i) v[i] /= n;
    basis.push_back(std::move(v));
  }
  Tensor out(Shape{rows, cols});
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) out(i, j) = basis[j][i];
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

// Template renderings; every template mentions each attribute exactly once.
inline std::vector<std::string> render_caption(int tmpl, const std::vector<std::string>& a) {
  const int k = static_cast<int>(a.size());
  std::vector<std::string> t;
  auto rest = [&](int from) {
    for (int i = from; i < k; ++i) t.push_back(a[static_cast<std::size_t>(i)]);
  };
  switch (tmpl) {
    case 0:
      t = {"a"};
      rest(0);
      break;
    case 1:
      if (k == 1) {
        t = {"the", a[0], "is"};
      } else {
        t = {"the", a[1], "is", a[0]};
        if (k > 2) {
          t.emplace_back("and");
          rest(2);
        }
      }
      break;
    case 2:
      t = {"one"};
      rest(0);
      t.emplace_back("that");
      t.emplace_back("is");
      break;
    case 3:
      t = {"there", "is", "a"};
      rest(0);
      t.emplace_back("and");
      t.emplace_back("it");
      break;
    default:
      t = {"it", "is", "a"};
      rest(0);
      break;
  }
  return t;
}

inline Tensor latent_of(const WorldSpec& w, const std::vector<int>& attrs) {
  Tensor x(Shape{static_cast<std::size_t>(w.latent_dim())});
  for (int s = 0; s < w.n_slots; ++s)
    x[static_cast<std::size_t>(w.attr_axis(s, attrs[static_cast<std::size_t>(s)]))] = 1.0;
  return x;
}

}  // namespace detail

// Deterministic per seed. Every item gets one gold caption and four templated
// paraphrases; heldout items are disjoint from train by latent identity.
inline PlantedCorpus generate_corpus(int n_items, int n_attributes, double noise,
                                     std::uint64_t seed) {
  if (n_items < 4) throw PreconditionError("generate_corpus: n_items must be >= 4");
  if (n_attributes < 1) throw PreconditionError("generate_corpus: n_attributes must be >= 1");

  PlantedCorpus corpus;
  WorldSpec& w = corpus.world;
  w.n_slots = n_attributes;
  w.noise = noise;
  w.seed = seed;
  // Enough combinations for distinct latents with headroom.
  w.slot_size = 8;
  while (std::pow(static_cast<double>(w.slot_size), n_attributes) < 1.3 * n_items) ++w.slot_size;
  w.patch_dim = std::max(32, w.latent_dim() + 3);
  w.slot_words.clear();
  for (int s = 0; s < w.n_slots; ++s) w.slot_words.push_back(WorldSpec::base_words(s, w.slot_size));

  Rng rng(derive_seed(seed, 0xC0F9E5));
  corpus.render_basis = detail::orthonormal_columns(
      static_cast<std::size_t>(w.patch_dim), static_cast<std::size_t>(w.latent_dim()), rng);

  // Distinct attribute combinations, shuffled, then split 80/20.
  const long combos = static_cast<long>(std::llround(
      std::pow(static_cast<double>(w.slot_size), static_cast<double>(w.n_slots))));
  std::vector<long> pool(static_cast<std::size_t>(combos));
  for (long i = 0; i < combos; ++i) pool[static_cast<std::size_t>(i)] = i;
  rng.shuffle(pool.begin(), pool.end());

  std::vector<std::string> all_texts;
  const int held = std::max(1, n_items / 5);
  for (int idx = 0; idx < n_items; ++idx) {
    CorpusItem item;
    long code = pool[static_cast<std::size_t>(idx)];
    for (int s = 0; s < w.n_slots; ++s) {
      item.attrs.push_back(static_cast<int>(code % w.slot_size));
      code /= w.slot_size;
    }
    std::vector<std::string> words;
    for (int s = 0; s < w.n_slots; ++s)
      words.push_back(w.slot_words[static_cast<std::size_t>(s)]
                                  [static_cast<std::size_t>(item.attrs[static_cast<std::size_t>(s)])]);
    item.caption = detail::join_tokens(detail::render_caption(0, words));
    for (int t = 1; t <= 4; ++t)
      item.refs.push_back(detail::join_tokens(detail::render_caption(t, words)));

    // Region structure: patch p carries attribute slot (p mod K) at full
    // strength and the rest attenuated, so different patches are genuinely
    // different views and the mean patch still recovers the whole latent.
    const Tensor latent = detail::latent_of(w, item.attrs);
    item.patches = Tensor(Shape{static_cast<std::size_t>(w.n_patches),
                                static_cast<std::size_t>(w.patch_dim)});
    for (int p = 0; p < w.n_patches; ++p) {
      Tensor masked = latent;
      for (int s = 0; s < w.n_slots; ++s)
        if (s != p % w.n_slots)
          masked[static_cast<std::size_t>(w.attr_axis(s, item.attrs[static_cast<std::size_t>(s)]))] *= 0.3;
      for (int d = 0; d < w.patch_dim; ++d) {
        double v = 0;
        for (int l = 0; l < w.latent_dim(); ++l)
          v += corpus.render_basis(static_cast<std::size_t>(d), static_cast<std::size_t>(l)) *
               masked[static_cast<std::size_t>(l)];
        item.patches(static_cast<std::size_t>(p), static_cast<std::size_t>(d)) =
            v + noise * rng.normal();
      }
    }

    all_texts.push_back(item.caption);
    for (const auto& r : item.refs) all_texts.push_back(r);
    if (idx < n_items - held)
      corpus.train.push_back(std::move(item));
    else
      corpus.heldout.push_back(std::move(item));
  }
  corpus.vocab = Vocabulary::build(all_texts, 4096);
  return corpus;
}

// Frozen planted teacher: latent recovery composed with a frozen random map.
// Vision recovers the latent by projecting the mean patch onto the rendering
// basis; text recovers a bag-of-tokens latent where attribute words hit their
// axis and every other token (grammar, filler, pad) adds syntax mass. The
// caption window is padded to a fixed length, so unused positions also count
// as syntax.
template <class T>
class SyntheticTeacherT final : public DualEncoderT<T> {
public:
  SyntheticTeacherT(const WorldSpec& world, const Tensor& render_basis,
                    const Vocabulary& vocab, int joint_dim, std::uint64_t seed)
      : world_(world), joint_dim_(joint_dim), seed_(seed) {
    recover_ = transpose(render_basis).cast<T>();  // latent x patch_dim
    Rng rng(derive_seed(seed, 0x7EAC4E2));
    // Isometric frozen map when the joint space is wide enough; inner products
    // of recovered latents are then preserved exactly.
    if (joint_dim >= world.latent_dim()) {
      phi_ = transpose(detail::orthonormal_columns(static_cast<std::size_t>(joint_dim),
                                                   static_cast<std::size_t>(world.latent_dim()),
                                                   rng))
                 .cast<T>();
    } else {
      phi_ = TensorT<T>::normal(Shape{static_cast<std::size_t>(world.latent_dim()),
                                      static_cast<std::size_t>(joint_dim)},
                                rng, T(1) / std::sqrt(static_cast<T>(world.latent_dim())));
    }
    token_axis_.assign(static_cast<std::size_t>(vocab.size()), world.syntax_axis());
    for (int s = 0; s < world.n_slots; ++s)
      for (int c = 0; c < world.slot_size; ++c) {
        const auto& word = world.slot_words[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)];
        if (vocab.contains(word))
          token_axis_[static_cast<std::size_t>(vocab.id(word))] = world.attr_axis(s, c);
      }
  }

  std::pair<TensorT<T>, TensorT<T>> encode_image(const TensorT<T>& patches) const override {
    if (patches.rank() != 2 || static_cast<int>(patches.cols()) != world_.patch_dim)
      throw DimensionError("teacher encode_image: patches " + shape_string(patches.shape()));
    const std::size_t n = patches.rows();
    TensorT<T> rows(Shape{n, static_cast<std::size_t>(joint_dim_)});
    TensorT<T> mean_latent(Shape{static_cast<std::size_t>(world_.latent_dim())});
    for (std::size_t p = 0; p < n; ++p) {
      TensorT<T> lat = project(patches, p);
      for (std::size_t l = 0; l < lat.numel(); ++l) mean_latent[l] += lat[l] / static_cast<T>(n);
      TensorT<T> e = embed(lat);
      for (std::size_t j = 0; j < e.numel(); ++j) rows(p, j) = e[j];
    }
    return {l2_normalized(embed(mean_latent)), std::move(rows)};
  }

  std::pair<TensorT<T>, TensorT<T>> encode_text(const std::vector<int>& ids) const override {
    if (ids.empty()) throw DegenerateInputError("teacher encode_text: empty sequence");
    TensorT<T> latent(Shape{static_cast<std::size_t>(world_.latent_dim())});
    const int window = world_.text_window;
    TensorT<T> rows(Shape{ids.size(), static_cast<std::size_t>(joint_dim_)});
    for (std::size_t t = 0; t < ids.size(); ++t) {
      TensorT<T> contrib(Shape{static_cast<std::size_t>(world_.latent_dim())});
      add_token(contrib, ids[t]);
      if (static_cast<int>(t) < window)
        for (std::size_t l = 0; l < latent.numel(); ++l) latent[l] += contrib[l];
      TensorT<T> e = embed(contrib);
      for (std::size_t j = 0; j < e.numel(); ++j) rows(t, j) = e[j];
    }
    // Unfilled window positions read as padding.
    const int pads = std::max(0, window - static_cast<int>(ids.size()));
    latent[static_cast<std::size_t>(world_.syntax_axis())] +=
        static_cast<T>(world_.syntax_weight) * static_cast<T>(pads);
    return {l2_normalized(embed(latent)), std::move(rows)};
  }

  // Stem weights the student copies and freezes: the rendering basis laid into
  // the first latent_dim columns, seeded filler beyond.
  std::pair<TensorT<T>, TensorT<T>> student_stem(int model_dim) const {
    Rng rng(derive_seed(seed_, 0x57E3));
    TensorT<T> w(Shape{static_cast<std::size_t>(world_.patch_dim),
                       static_cast<std::size_t>(model_dim)});
    for (int i = 0; i < world_.patch_dim; ++i)
      for (int j = 0; j < model_dim; ++j)
        w(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
            j < world_.latent_dim()
                ? recover_(static_cast<std::size_t>(j), static_cast<std::size_t>(i))
                : static_cast<T>(0.01 * rng.normal());
    TensorT<T> b(Shape{static_cast<std::size_t>(model_dim)});
    for (std::size_t j = 0; j < b.numel(); ++j) b[j] = static_cast<T>(0.01 * rng.normal());
    return {std::move(w), std::move(b)};
  }

  const WorldSpec& world() const { return world_; }

private:
  TensorT<T> project(const TensorT<T>& patches, std::size_t row) const {
    TensorT<T> lat(Shape{static_cast<std::size_t>(world_.latent_dim())});
    for (std::size_t l = 0; l < lat.numel(); ++l) {
      T s = 0;
      for (std::size_t c = 0; c < patches.cols(); ++c) s += recover_(l, c) * patches(row, c);
      lat[l] = s;
    }
    return lat;
  }

  TensorT<T> embed(const TensorT<T>& latent) const {
    TensorT<T> out(Shape{static_cast<std::size_t>(joint_dim_)});
    for (std::size_t j = 0; j < out.numel(); ++j) {
      T s = 0;
      for (std::size_t l = 0; l < latent.numel(); ++l) s += latent[l] * phi_(l, j);
      out[j] = s;
    }
    return out;
  }

  void add_token(TensorT<T>& latent, int id) const {
    const int axis = (id >= 0 && id < static_cast<int>(token_axis_.size()))
                         ? token_axis_[static_cast<std::size_t>(id)]
                         : world_.syntax_axis();
    latent[static_cast<std::size_t>(axis)] +=
        axis == world_.syntax_axis() ? static_cast<T>(world_.syntax_weight) : T(1);
  }

  WorldSpec world_;
  int joint_dim_;
  std::uint64_t seed_;
  TensorT<T> recover_;  // latent_dim x patch_dim
  TensorT<T> phi_;      // latent_dim x joint_dim
  std::vector<int> token_axis_;
};

template <class T>
SyntheticTeacherT<T> make_synthetic_teacher(const PlantedCorpus& corpus, int joint_dim,
                                            std::uint64_t seed) {
  return SyntheticTeacherT<T>(corpus.world, corpus.render_basis, corpus.vocab, joint_dim, seed);
}

// Copies the teacher-provided stem into the student and keeps it frozen.
template <class T>
void adopt_stem(LCLIPModelT<T>& model, const SyntheticTeacherT<T>& teacher) {
  auto [w, b] = teacher.student_stem(model.vision_cfg.model_dim);
  if (!w.same_shape(model.stem_w.value))
    throw DimensionError("adopt_stem: stem shape " + shape_string(w.shape()) +
                         " does not match model " + shape_string(model.stem_w.value.shape()));
  model.stem_w.value = std::move(w);
  model.stem_b.value = std::move(b);
  model.stem_w.frozen = true;
  model.stem_b.frozen = true;
}

// ---------------------------------------------------------------------------
// Protocol fixtures
// ---------------------------------------------------------------------------

struct PascalFixture {
  std::size_t image_index;
  std::string caption_a, caption_b;
  std::string category;  // HC | HI | HM | MM
  char choice;           // 'A' | 'B'
  std::vector<std::string> refs;
};

struct FoilFixture {
  std::size_t image_index;
  std::string true_caption, foil_caption;
  std::vector<std::string> refs;
};

struct RatingFixture {
  std::size_t image_index;
  std::string caption;
  double rating;  // 1..4, derived from latent overlap
};

struct ProtocolFixtures {
  std::vector<PascalFixture> pascal;
  std::vector<FoilFixture> foil;
  std::vector<RatingFixture> ratings;
};

namespace detail {

inline double overlap_fraction(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t same = 0;
  for (std::size_t s = 0; s < a.size(); ++s)
    if (a[s] == b[s]) ++same;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

inline std::vector<std::string> words_of(const WorldSpec& w, const std::vector<int>& attrs) {
  std::vector<std::string> out;
  for (int s = 0; s < w.n_slots; ++s)
    out.push_back(w.slot_words[static_cast<std::size_t>(s)]
                              [static_cast<std::size_t>(attrs[static_cast<std::size_t>(s)])]);
  return out;
}

inline std::vector<int> swap_attrs(const WorldSpec& w, std::vector<int> attrs, int n_swaps,
                                   Rng& rng) {
  std::vector<int> slots(static_cast<std::size_t>(w.n_slots));
  for (int s = 0; s < w.n_slots; ++s) slots[static_cast<std::size_t>(s)] = s;
  rng.shuffle(slots.begin(), slots.end());
  for (int i = 0; i < std::min(n_swaps, w.n_slots); ++i) {
    const int s = slots[static_cast<std::size_t>(i)];
    const int old = attrs[static_cast<std::size_t>(s)];
    int repl = rng.uniform_int(0, w.slot_size - 2);
    if (repl >= old) ++repl;
    attrs[static_cast<std::size_t>(s)] = repl;
  }
  return attrs;
}

}  // namespace detail

// Pascal-style pairs, FOIL records and rating records over the corpus items.
// Foils swap exactly one attribute token; human choices follow latent overlap
// and overlaps are constructed to differ within each pair.
inline ProtocolFixtures generate_protocol_fixtures(const PlantedCorpus& corpus,
                                                   std::uint64_t seed) {
  const WorldSpec& w = corpus.world;
  Rng rng(derive_seed(seed, 0xF1C7));
  ProtocolFixtures out;

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const CorpusItem& item = corpus.item(i);
    const auto gold_words = detail::words_of(w, item.attrs);

    // FOIL: one attribute swapped in the gold rendering.
    {
      const auto foil_attrs = detail::swap_attrs(w, item.attrs, 1, rng);
      FoilFixture f;
      f.image_index = i;
      f.true_caption = item.caption;
      f.foil_caption = detail::join_tokens(detail::render_caption(0, detail::words_of(w, foil_attrs)));
      f.refs = item.refs;
      out.foil.push_back(std::move(f));
    }

    // Pascal analogues. Category construction:
    //   HC: full paraphrase vs paraphrase missing one attribute
    //   HI: correct paraphrase vs one-attribute swap
    //   HM: human paraphrase vs machine-flavoured rendering missing one slot
    //   MM: machine one-swap vs machine min(2, K)-swaps
    const std::string cat = (i % 4 == 0) ? "HC" : (i % 4 == 1) ? "HI" : (i % 4 == 2) ? "HM" : "MM";
    PascalFixture p;
    p.image_index = i;
    p.category = cat;
    p.refs = item.refs;
    p.refs.push_back(item.caption);
    std::string better, worse;
    if (cat == "HC") {
      better = detail::join_tokens(detail::render_caption(1, gold_words));
      auto partial = gold_words;
      if (partial.size() > 1) partial.pop_back();
      worse = detail::join_tokens(detail::render_caption(2, partial));
    } else if (cat == "HI") {
      better = detail::join_tokens(detail::render_caption(1, gold_words));
      worse = detail::join_tokens(
          detail::render_caption(1, detail::words_of(w, detail::swap_attrs(w, item.attrs, 1, rng))));
    } else if (cat == "HM") {
      better = detail::join_tokens(detail::render_caption(2, gold_words));
      auto partial = gold_words;
      if (partial.size() > 1) partial.erase(partial.begin());
      worse = detail::join_tokens(detail::render_caption(0, partial));
    } else {
      better = detail::join_tokens(
          detail::render_caption(0, detail::words_of(w, detail::swap_attrs(w, item.attrs, w.n_slots > 1 ? 1 : 0, rng))));
      worse = detail::join_tokens(detail::render_caption(
          0, detail::words_of(w, detail::swap_attrs(w, item.attrs, std::min(2, w.n_slots) + (w.n_slots > 1 ? 0 : 1), rng))));
    }
    if (rng.bernoulli(0.5)) {
      p.caption_a = better;
      p.caption_b = worse;
      p.choice = 'A';
    } else {
      p.caption_a = worse;
      p.caption_b = better;
      p.choice = 'B';
    }
    out.pascal.push_back(std::move(p));

    // Ratings from latent overlap: matched, partial, unmatched.
    out.ratings.push_back({i, item.caption, 4.0});
    const CorpusItem& other = corpus.item((i + 1 + rng.uniform_index(corpus.size() - 1)) % corpus.size());
    out.ratings.push_back(
        {i, other.caption, 1.0 + 3.0 * detail::overlap_fraction(item.attrs, other.attrs)});
    const auto scrambled = detail::swap_attrs(w, item.attrs, w.n_slots, rng);
    out.ratings.push_back(
        {i, detail::join_tokens(detail::render_caption(0, detail::words_of(w, scrambled))),
         1.0 + 3.0 * detail::overlap_fraction(item.attrs, scrambled)});
  }
  return out;
}

}  // namespace lclip
