#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lclip/captioner.hpp"
#include "lclip/checkpoint.hpp"
#include "lclip/distill.hpp"
#include "lclip/jsonl.hpp"
#include "lclip/metric.hpp"
#include "lclip/protocols.hpp"
#include "lclip/rankstats.hpp"
#include "lclip/synthetic.hpp"

namespace lclip {

inline constexpr int kRunConfigVersion = 1;

namespace fsys = std::filesystem;

namespace detail {

inline Json load_run_config(const fsys::path& path, const std::vector<std::string>& allowed) {
  Json cfg = parse_json(read_text_file(path), path.string());
  reject_unknown_keys(cfg, allowed, path.string());
  const long version = require_integer(cfg, "format_version", path.string());
  if (version != kRunConfigVersion)
    throw ConfigError(path.string() + ": format_version " + std::to_string(version) +
                      " not supported (expected " + std::to_string(kRunConfigVersion) + ")");
  return cfg;
}

inline PlantedCorpus corpus_from_config(const Json& j, const std::string& what) {
  reject_unknown_keys(j, {"n_items", "n_attributes", "noise", "seed", "syntax_weight"}, what);
  PlantedCorpus corpus = generate_corpus(
      static_cast<int>(require_integer(j, "n_items", what)),
      static_cast<int>(require_integer(j, "n_attributes", what)),
      require_number(j, "noise", what), static_cast<std::uint64_t>(require_integer(j, "seed", what)));
  if (j.contains("syntax_weight"))
    corpus.world.syntax_weight = require_number(j, "syntax_weight", what);
  return corpus;
}

inline void write_run_manifest(const fsys::path& dir, const std::string& command,
                               const std::string& cfg_hash, std::uint64_t seed) {
  Json m;
  m["format_version"] = kRunConfigVersion;
  m["command"] = command;
  m["config_hash"] = cfg_hash;
  m["seed"] = seed;
  atomic_write_file(dir / "run_manifest.json", m.dump(2) + "\n");
}

inline void write_losscurve(const fsys::path& path, const std::vector<LossRow>& rows) {
  CsvWriter csv;
  csv.header = "step,loss_total,loss_sr,loss_d";
  for (const auto& r : rows)
    csv.rows.push_back(std::to_string(r.step) + "," + format_double(r.total) + "," +
                       format_double(r.sr) + "," + format_double(r.d));
  csv.write(path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------------

struct DistillOutcome {
  fsys::path checkpoint_dir;
  double first_loss = 0, final_loss = 0;
  bool resumed_stage2 = false;
  bool already_complete = false;
};

inline StageConfig stage_config_from_json(const Json& j, int stage, std::uint64_t master_seed,
                                          const std::string& what) {
  reject_unknown_keys(j, {"learning_rate", "batch_size", "epochs", "freeze_text", "augmentation",
                          "use_contrastive", "data_fraction"}, what);
  StageConfig cfg;
  cfg.stage = stage;
  cfg.learning_rate = require_number(j, "learning_rate", what);
  cfg.batch_size = static_cast<int>(require_integer(j, "batch_size", what));
  cfg.epochs = static_cast<int>(require_integer(j, "epochs", what));
  cfg.freeze_text = j.value("freeze_text", stage == 2);
  cfg.augmentation = j.value("augmentation", false);
  cfg.use_contrastive = j.value("use_contrastive", false);
  cfg.seed = derive_seed(master_seed, static_cast<std::uint64_t>(stage));
  if (stage == 2 && !cfg.freeze_text)
    throw ConfigError(what + ": stage 2 requires freeze_text = true");
  return cfg;
}

inline DistillOutcome run_distill(const fsys::path& config_path,
                                  std::optional<std::uint64_t> seed_override = {}) {
  const Json cfg = detail::load_run_config(
      config_path, {"format_version", "seed", "output_dir", "corpus", "teacher", "model",
                    "stage1", "stage2"});
  const std::uint64_t seed = seed_override.value_or(
      static_cast<std::uint64_t>(require_integer(cfg, "seed", "config")));
  const fsys::path out_dir = require_string(cfg, "output_dir", "config");
  fsys::create_directories(out_dir);

  Json hash_cfg = cfg;
  hash_cfg["seed"] = seed;
  const std::string cfg_hash = config_hash(hash_cfg);

  PlantedCorpus corpus = detail::corpus_from_config(require_field(cfg, "corpus", "config"),
                                                    "config.corpus");
  const Json& teacher_cfg = require_field(cfg, "teacher", "config");
  reject_unknown_keys(teacher_cfg, {"joint_dim", "seed"}, "config.teacher");
  const int joint_dim = static_cast<int>(require_integer(teacher_cfg, "joint_dim", "config.teacher"));
  auto teacher = make_synthetic_teacher<double>(
      corpus, joint_dim, static_cast<std::uint64_t>(require_integer(teacher_cfg, "seed", "config.teacher")));

  const Json& model_cfg = require_field(cfg, "model", "config");
  reject_unknown_keys(model_cfg, {"vision", "text", "rank", "joint_dim"}, "config.model");
  EncoderConfig vis = encoder_config_from_json(model_cfg.at("vision"), "config.model.vision");
  const EncoderConfig txt = encoder_config_from_json(model_cfg.at("text"), "config.model.text");
  if (vis.input_dim == 0) vis.input_dim = corpus.world.patch_dim;
  if (vis.input_dim != corpus.world.patch_dim)
    throw ConfigError("config.model.vision.input_dim does not match the corpus patch width " +
                      std::to_string(corpus.world.patch_dim));
  const int model_joint = static_cast<int>(require_integer(model_cfg, "joint_dim", "config.model"));
  if (model_joint != joint_dim)
    throw ConfigError("config.model.joint_dim must equal config.teacher.joint_dim");

  auto student = build_model<double>(
      vis, txt, corpus.vocab.size(),
      static_cast<int>(require_integer(model_cfg, "rank", "config.model")), model_joint,
      derive_seed(seed, 3));
  adopt_stem(student, teacher);

  DistillOutcome outcome;
  outcome.checkpoint_dir = out_dir / "ckpt_final";
  const fsys::path stage1_dir = out_dir / "ckpt_stage1";

  if (fsys::exists(outcome.checkpoint_dir / "manifest.json")) {
    load_model_checkpoint<double>(outcome.checkpoint_dir);  // validates
    outcome.already_complete = true;
    detail::write_run_manifest(out_dir, "distill", cfg_hash, seed);
    return outcome;
  }

  const StageConfig s1 = stage_config_from_json(require_field(cfg, "stage1", "config"), 1, seed,
                                                "config.stage1");
  const StageConfig s2 = stage_config_from_json(require_field(cfg, "stage2", "config"), 2, seed,
                                                "config.stage2");
  const double frac = cfg.at("stage1").value("data_fraction", 0.3);
  const auto split = static_cast<std::size_t>(static_cast<double>(corpus.train.size()) * frac);

  std::vector<LossRow> curve;
  if (fsys::exists(stage1_dir / "manifest.json")) {
    auto params = student.params();
    load_checkpoint_into(stage1_dir, params);
    outcome.resumed_stage2 = true;
  } else {
    std::vector<Tensor> vdata;
    std::vector<std::vector<int>> tdata;
    for (std::size_t i = 0; i < split; ++i) {
      vdata.push_back(corpus.train[i].patches);
      tdata.push_back(corpus.vocab.encode(corpus.train[i].caption));
    }
    TrainResult r1 = train_stage1(student, teacher, vdata, tdata, s1);
    curve = r1.rows;
    save_model_checkpoint(stage1_dir, student, corpus.vocab);
  }

  std::vector<PairExample> pairs;
  for (std::size_t i = split; i < corpus.train.size(); ++i)
    pairs.push_back({corpus.train[i].patches, corpus.vocab.encode(corpus.train[i].caption)});
  TrainResult r2 = train_stage2(student, teacher, pairs, s2);
  const long base = curve.empty() ? 0 : curve.back().step + 1;
  for (auto row : r2.rows) {
    row.step += base;
    curve.push_back(row);
  }

  save_model_checkpoint(outcome.checkpoint_dir, student, corpus.vocab);
  detail::write_losscurve(out_dir / "losscurve.csv", curve);
  detail::write_run_manifest(out_dir, "distill", cfg_hash, seed);
  if (!curve.empty()) {
    outcome.first_loss = curve.front().total;
    outcome.final_loss = curve.back().total;
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreOptions {
  fsys::path checkpoint, input, features, output;
  double w = 2.5;
  bool with_refs = false;
};

struct ScoreOutcome {
  std::size_t scored = 0;
  std::vector<std::pair<std::size_t, std::string>> errors;
};

inline ScoreOutcome run_score(const ScoreOptions& opt) {
  auto [model, vocab] = load_model_checkpoint<double>(opt.checkpoint);
  const FeatureTable features = read_features(opt.features);
  const auto inputs = read_score_input(opt.input);
  LCLIPEncoderT<double> enc(model);
  BatchScorer<double> scorer(enc, vocab, MetricConfig{.w = opt.w});
  std::vector<ScoreRequest> requests;
  for (const auto& rec : inputs) {
    ScoreRequest req;
    req.id = rec.id;
    req.patches = features.get(rec.image);
    req.candidate = rec.candidate;
    if (opt.with_refs) {
      if (rec.refs.empty())
        throw DataError(opt.input.string() + ":" + std::to_string(rec.line) +
                        ": --refs requires a non-empty \"refs\" field");
      req.refs = rec.refs;
    }
    requests.push_back(std::move(req));
  }
  const BatchScoreResult result = scorer.score(requests);
  std::vector<Json> rows;
  for (const auto& rec : result.records) {
    Json j;
    j["id"] = rec.pair_id;
    j["l_clipscore"] = rec.l_clipscore;
    if (rec.ref_l_clipscore) j["ref_l_clipscore"] = *rec.ref_l_clipscore;
    j["w"] = rec.w;
    rows.push_back(std::move(j));
  }
  write_jsonl(opt.output, rows);
  return {result.records.size(), result.errors};
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string protocol;  // kendall-b | kendall-c | pascal | foil
  fsys::path ratings, pairs, foil;
  fsys::path checkpoint, features;
  fsys::path output;  // report.csv, append
  std::string ref_mode = "none";  // none | 1-ref | 4-ref
  bool with_refs = false;         // pascal: use the reference-based metric
  double w = 2.5;
};

struct EvalRow {
  std::string protocol;
  long n = 0;
  std::string stats;  // "name=value;..." pairs
  std::string config_hash;
};

inline void append_report_row(const fsys::path& path, const EvalRow& row) {
  static const std::string header = "protocol,n,stats,config_hash";
  std::string text;
  if (fsys::exists(path)) {
    text = read_text_file(path);
    if (text.rfind(header, 0) != 0) text = header + "\n" + text;
  } else {
    text = header + "\n";
  }
  text += row.protocol + "," + std::to_string(row.n) + "," + csv_escape(row.stats) + "," +
          row.config_hash + "\n";
  atomic_write_file(path, text);
}

inline EvalRow run_eval(const EvalOptions& opt) {
  Json hash_cfg{{"protocol", opt.protocol}, {"ref_mode", opt.ref_mode},
                {"with_refs", opt.with_refs}, {"w", opt.w}};
  EvalRow row;
  row.protocol = opt.protocol;
  row.config_hash = config_hash(hash_cfg);

  if (opt.protocol == "kendall-b" || opt.protocol == "kendall-c") {
    const auto ratings = read_ratings(opt.ratings);
    std::vector<double> human, metric;
    for (const auto& r : ratings) {
      human.push_back(r.rating);
      metric.push_back(r.score);
    }
    row.n = static_cast<long>(ratings.size());
    const double tau = opt.protocol == "kendall-b" ? kendall_tau_b(metric, human)
                                                   : kendall_tau_c(metric, human);
    row.stats = "tau=" + format_double(tau);
  } else if (opt.protocol == "pascal" || opt.protocol == "foil") {
    auto [model, vocab] = load_model_checkpoint<double>(opt.checkpoint);
    const FeatureTable features = read_features(opt.features);
    LCLIPEncoderT<double> enc(model);
    BatchScorer<double> scorer(enc, vocab, MetricConfig{.w = opt.w});
    const bool use_refs = opt.with_refs;
    CaptionScorer caption_scorer = [&](const std::string& image_id, const std::string& caption,
                                       std::span<const std::string> refs) {
      const Tensor& v0 = scorer.image_embedding(features.get(image_id));
      const Tensor& u0 = scorer.text_embedding(caption);
      if (use_refs && !refs.empty()) {
        std::vector<Tensor> ref_embs;
        for (const auto& r : refs) ref_embs.push_back(scorer.text_embedding(r));
        return ref_l_clipscore(u0, ref_embs, v0, MetricConfig{.w = opt.w});
      }
      return l_clipscore(v0, u0, opt.w);
    };
    if (opt.protocol == "pascal") {
      std::vector<PairRecord> records;
      for (const auto& r : read_pairs(opt.pairs))
        records.push_back({r.image, r.a, r.b, pascal_category_from_string(r.category),
                           r.choice[0], r.refs});
      const PascalResult res = pascal_accuracy(records, caption_scorer);
      row.n = res.n;
      std::string stats;
      for (const auto& [cat, acc] : res.accuracy)
        stats += std::string(to_string(cat)) + "=" + format_double(acc) + ";";
      stats += "mean=" + format_double(res.mean);
      row.stats = stats;
    } else {
      RefMode mode;
      if (opt.ref_mode == "none") mode = RefMode::none;
      else if (opt.ref_mode == "1-ref") mode = RefMode::one_ref;
      else if (opt.ref_mode == "4-ref") mode = RefMode::four_ref;
      else throw ConfigError("--ref-mode must be none, 1-ref or 4-ref");
      std::vector<FoilRecord> records;
      for (const auto& r : read_foil(opt.foil))
        records.push_back({r.image, r.true_caption, r.foil_caption, r.refs});
      const double acc = foil_accuracy(records, caption_scorer, mode);
      row.n = static_cast<long>(records.size());
      row.stats = "accuracy=" + format_double(acc) + ";ref_mode=" + opt.ref_mode;
    }
  } else {
    throw ConfigError("unknown protocol \"" + opt.protocol + "\"");
  }
  if (!opt.output.empty()) append_report_row(opt.output, row);
  return row;
}

// ---------------------------------------------------------------------------
// train-captioner
// ---------------------------------------------------------------------------

struct CaptionerOutcome {
  fsys::path checkpoint_dir;
  std::vector<ScstLogRow> log;
};

inline CaptionerOutcome run_train_captioner(const fsys::path& config_path,
                                            std::optional<double> alpha_override = {},
                                            std::optional<std::uint64_t> seed_override = {}) {
  const Json cfg = detail::load_run_config(
      config_path, {"format_version", "seed", "output_dir", "corpus", "captioner", "xe", "scst",
                    "reward", "scorer"});
  const std::uint64_t seed = seed_override.value_or(
      static_cast<std::uint64_t>(require_integer(cfg, "seed", "config")));
  const fsys::path out_dir = require_string(cfg, "output_dir", "config");
  fsys::create_directories(out_dir);

  PlantedCorpus corpus = detail::corpus_from_config(require_field(cfg, "corpus", "config"),
                                                    "config.corpus");

  const Json& rj = require_field(cfg, "reward", "config");
  reject_unknown_keys(rj, {"alpha", "use_refs", "w", "normalize"}, "config.reward");
  RewardConfig reward;
  reward.alpha = alpha_override.value_or(require_number(rj, "alpha", "config.reward"));
  reward.use_refs = rj.value("use_refs", false);
  reward.w = rj.value("w", 2.5);
  reward.normalize = rj.value("normalize", false);
  reward.validate();

  // Scorer providing the embedding half of the reward.
  const Json& sj = require_field(cfg, "scorer", "config");
  std::unique_ptr<DualEncoderT<double>> scorer_enc;
  std::unique_ptr<LCLIPModelT<double>> scorer_model;
  Vocabulary scorer_vocab = corpus.vocab;
  const std::string scorer_type = require_string(sj, "type", "config.scorer");
  if (scorer_type == "planted_teacher") {
    reject_unknown_keys(sj, {"type", "joint_dim", "seed"}, "config.scorer");
    scorer_enc = std::make_unique<SyntheticTeacherT<double>>(make_synthetic_teacher<double>(
        corpus, static_cast<int>(require_integer(sj, "joint_dim", "config.scorer")),
        static_cast<std::uint64_t>(require_integer(sj, "seed", "config.scorer"))));
  } else if (scorer_type == "checkpoint") {
    reject_unknown_keys(sj, {"type", "path"}, "config.scorer");
    auto loaded = load_model_checkpoint<double>(require_string(sj, "path", "config.scorer"));
    scorer_model = std::make_unique<LCLIPModelT<double>>(std::move(loaded.first));
    scorer_vocab = std::move(loaded.second);
    scorer_enc = std::make_unique<LCLIPEncoderT<double>>(*scorer_model);
  } else {
    throw ConfigError("config.scorer.type must be planted_teacher or checkpoint");
  }

  const Json& cj = require_field(cfg, "captioner", "config");
  reject_unknown_keys(cj, {"layers", "dim", "heads", "ffn_dim", "max_len"}, "config.captioner");
  CaptionerConfig cap_cfg;
  cap_cfg.layers = static_cast<int>(require_integer(cj, "layers", "config.captioner"));
  cap_cfg.dim = static_cast<int>(require_integer(cj, "dim", "config.captioner"));
  cap_cfg.heads = static_cast<int>(require_integer(cj, "heads", "config.captioner"));
  cap_cfg.ffn_dim = static_cast<int>(require_integer(cj, "ffn_dim", "config.captioner"));
  cap_cfg.max_len = static_cast<int>(require_integer(cj, "max_len", "config.captioner"));
  cap_cfg.vocab = corpus.vocab.size();
  cap_cfg.feature_dim = corpus.world.patch_dim;
  cap_cfg.seed = derive_seed(seed, 11);
  auto captioner = build_captioner<double>(cap_cfg);

  // Tasks + IDF from the training references.
  std::vector<CaptionTask> tasks;
  std::vector<std::vector<std::string>> image_refs;
  for (const auto& item : corpus.train) {
    CaptionTask t;
    t.features = item.patches;
    t.gold = corpus.vocab.encode(item.caption);
    t.gold.push_back(cap_cfg.eos);
    for (const auto& r : item.refs) t.ref_tokens.push_back(split_words(r));
    t.scorer_v0 = scorer_enc->encode_image(item.patches).first;
    tasks.push_back(std::move(t));
    image_refs.push_back(item.refs);
  }
  const CorpusIDF idf = build_idf_text(image_refs);
  atomic_write_file(out_dir / "idf.json", idf.to_json().dump() + "\n");

  EmbedFn u0_fn = [&](const std::vector<std::string>& words) {
    std::vector<int> ids;
    for (const auto& w : words) ids.push_back(scorer_vocab.id(w));
    return scorer_enc->encode_text(ids).first;
  };

  const Json& xj = require_field(cfg, "xe", "config");
  reject_unknown_keys(xj, {"epochs", "learning_rate", "lr_decay", "decay_every", "batch_size"},
                      "config.xe");
  XeConfig xe;
  xe.epochs = static_cast<int>(require_integer(xj, "epochs", "config.xe"));
  xe.learning_rate = require_number(xj, "learning_rate", "config.xe");
  xe.lr_decay = xj.value("lr_decay", 0.8);
  xe.decay_every = static_cast<int>(xj.value("decay_every", 3));
  xe.batch_size = static_cast<int>(require_integer(xj, "batch_size", "config.xe"));
  xe.seed = derive_seed(seed, 12);
  train_captioner_xe(captioner, tasks, xe);
  {
    Json configs;
    configs["captioner"] = {{"layers", cap_cfg.layers}, {"dim", cap_cfg.dim},
                            {"heads", cap_cfg.heads}, {"ffn_dim", cap_cfg.ffn_dim},
                            {"max_len", cap_cfg.max_len}, {"vocab", cap_cfg.vocab},
                            {"feature_dim", cap_cfg.feature_dim}};
    configs["vocab_words"] = corpus.vocab.words();
    auto params = captioner.params();
    save_checkpoint(out_dir / "ckpt_xe", "captioner", seed, configs, params);
  }

  const Json& scj = require_field(cfg, "scst", "config");
  reject_unknown_keys(scj, {"epochs", "learning_rate", "batch_size"}, "config.scst");
  ScstConfig scst;
  scst.epochs = static_cast<int>(require_integer(scj, "epochs", "config.scst"));
  scst.learning_rate = require_number(scj, "learning_rate", "config.scst");
  scst.batch_size = static_cast<int>(require_integer(scj, "batch_size", "config.scst"));
  scst.seed = derive_seed(seed, 13);
  CaptionerOutcome outcome;
  outcome.log = train_captioner_scst(captioner, tasks, corpus.vocab, idf, u0_fn, reward, scst);

  CsvWriter csv;
  csv.header = "epoch,mean_reward_sampled,mean_reward_greedy,cider,lclipscore,repetition_rate";
  for (const auto& r : outcome.log)
    csv.rows.push_back(std::to_string(r.epoch) + "," + format_double(r.mean_reward_sampled) +
                       "," + format_double(r.mean_reward_greedy) + "," + format_double(r.cider) +
                       "," + format_double(r.lclipscore) + "," + format_double(r.repetition));
  csv.write(out_dir / "scst_log.csv");

  {
    Json configs;
    configs["captioner"] = {{"layers", cap_cfg.layers}, {"dim", cap_cfg.dim},
                            {"heads", cap_cfg.heads}, {"ffn_dim", cap_cfg.ffn_dim},
                            {"max_len", cap_cfg.max_len}, {"vocab", cap_cfg.vocab},
                            {"feature_dim", cap_cfg.feature_dim}};
    configs["vocab_words"] = corpus.vocab.words();
    auto params = captioner.params();
    save_checkpoint(out_dir / "ckpt_final", "captioner", seed, configs, params);
  }
  Json hash_cfg = cfg;
  hash_cfg["seed"] = seed;
  hash_cfg["reward"]["alpha"] = reward.alpha;
  detail::write_run_manifest(out_dir, "train-captioner", config_hash(hash_cfg), seed);
  outcome.checkpoint_dir = out_dir / "ckpt_final";
  return outcome;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOutcome {
  long runs = 0;
  long rows = 0;
};

inline ReportOutcome run_report(const std::vector<fsys::path>& run_dirs,
                                const fsys::path& out_dir) {
  fsys::create_directories(out_dir);
  std::set<std::string> seen_hashes;
  std::set<std::string> rows;  // sorted, deduplicated
  long runs = 0;
  for (const auto& dir : run_dirs) {
    if (!fsys::exists(dir / "run_manifest.json") && !fsys::exists(dir / "report.csv"))
      throw DataError("run dir " + dir.string() + " has no run_manifest.json or report.csv");
    if (fsys::exists(dir / "run_manifest.json")) {
      const Json m = parse_json(read_text_file(dir / "run_manifest.json"), "run_manifest.json");
      const std::string h = require_string(m, "config_hash", "run_manifest.json");
      if (!seen_hashes.insert(h).second) continue;  // duplicate run dir
    }
    ++runs;
    if (fsys::exists(dir / "report.csv")) {
      std::istringstream in(read_text_file(dir / "report.csv"));
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        if (first) {
          first = false;
          continue;
        }
        if (!line.empty()) rows.insert(line);
      }
    }
  }
  CsvWriter csv;
  csv.header = "protocol,n,stats,config_hash";
  for (const auto& r : rows) csv.rows.push_back(r);
  csv.write(out_dir / "consolidated.csv");
  Json summary;
  summary["runs"] = runs;
  summary["rows"] = rows.size();
  atomic_write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  return {runs, static_cast<long>(rows.size())};
}

// ---------------------------------------------------------------------------
// Fixture emission (desk-scale dataset files for the eval pipeline)
// ---------------------------------------------------------------------------

// Writes the JSONL dataset files derived from a planted corpus: features,
// score input, pascal pairs, foil records. Ratings need metric scores, which
// the score command fills in.
inline void write_protocol_files(const PlantedCorpus& corpus, const ProtocolFixtures& fixtures,
                                 const fsys::path& dir) {
  fsys::create_directories(dir);
  std::vector<Json> feats, pairs, foils, inputs;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    feats.push_back(features_row("img" + std::to_string(i), corpus.item(i).patches));
  for (const auto& p : fixtures.pascal)
    pairs.push_back(Json{{"image", "img" + std::to_string(p.image_index)},
                         {"a", p.caption_a},
                         {"b", p.caption_b},
                         {"category", p.category},
                         {"choice", std::string(1, p.choice)},
                         {"refs", p.refs}});
  for (const auto& f : fixtures.foil)
    foils.push_back(Json{{"image", "img" + std::to_string(f.image_index)},
                         {"true", f.true_caption},
                         {"foil", f.foil_caption},
                         {"refs", f.refs}});
  long id = 0;
  for (const auto& r : fixtures.ratings)
    inputs.push_back(Json{{"id", "r" + std::to_string(id++)},
                          {"image", "img" + std::to_string(r.image_index)},
                          {"candidate", r.caption},
                          {"refs", corpus.item(r.image_index).refs}});
  write_jsonl(dir / "features.jsonl", feats);
  write_jsonl(dir / "pairs.jsonl", pairs);
  write_jsonl(dir / "foil.jsonl", foils);
  write_jsonl(dir / "candidates.jsonl", inputs);
  std::vector<Json> rating_rows;
  id = 0;
  for (const auto& r : fixtures.ratings)
    rating_rows.push_back(Json{{"id", "r" + std::to_string(id++)}, {"rating", r.rating}});
  write_jsonl(dir / "ratings_raw.jsonl", rating_rows);
}

}  // namespace lclip
