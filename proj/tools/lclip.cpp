#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

#include "lclip/runner.hpp"

using namespace lclip;

namespace {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const TrainingError*>(&e)) return 3;
  if (dynamic_cast<const DegenerateInputError*>(&e)) return 3;
  if (dynamic_cast<const Error*>(&e)) return 2;  // config / validation / data
  return 1;
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    const auto* as_err = dynamic_cast<const std::exception*>(&e);
    return exit_code_for(*as_err);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed dual-encoder caption metric: distillation, scoring, "
               "evaluation protocols, and self-critical captioner training"};
  app.require_subcommand(1);

  // distill
  auto* distill = app.add_subcommand("distill", "Run the two-stage distillation pipeline");
  std::string distill_config;
  std::int64_t distill_seed = -1;
  distill->add_option("--config", distill_config, "Run config JSON")->required();
  distill->add_option("--seed", distill_seed, "Override the config seed");
  distill->callback([&]() {
    std::optional<std::uint64_t> seed;
    if (distill_seed >= 0) seed = static_cast<std::uint64_t>(distill_seed);
    const DistillOutcome out = run_distill(distill_config, seed);
    if (out.already_complete)
      std::printf("distill: checkpoint already complete at %s\n",
                  out.checkpoint_dir.string().c_str());
    else
      std::printf("distill: %sfinal checkpoint %s (loss %s -> %s)\n",
                  out.resumed_stage2 ? "resumed stage 2; " : "",
                  out.checkpoint_dir.string().c_str(), format_double(out.first_loss).c_str(),
                  format_double(out.final_loss).c_str());
  });

  // score
  auto* score = app.add_subcommand("score", "Score candidate captions against images");
  ScoreOptions sopt;
  std::string s_ckpt, s_in, s_feat, s_out;
  score->add_option("--checkpoint", s_ckpt, "Checkpoint directory")->required();
  score->add_option("--input", s_in, "Input JSONL")->required();
  score->add_option("--features", s_feat, "Image features JSONL")->required();
  score->add_option("--output", s_out, "Output JSONL")->required();
  score->add_option("--w", sopt.w, "Rescaling weight");
  score->add_flag("--refs", sopt.with_refs, "Also compute the reference-based score");
  score->callback([&]() {
    sopt.checkpoint = s_ckpt;
    sopt.input = s_in;
    sopt.features = s_feat;
    sopt.output = s_out;
    const ScoreOutcome out = run_score(sopt);
    std::printf("score: wrote %zu records\n", out.scored);
    for (const auto& [idx, msg] : out.errors)
      std::fprintf(stderr, "score: record %zu failed: %s\n", idx, msg.c_str());
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Run an evaluation protocol and append a report row");
  EvalOptions eopt;
  std::string e_ratings, e_pairs, e_foil, e_ckpt, e_feat, e_out;
  eval->add_option("--protocol", eopt.protocol, "kendall-b | kendall-c | pascal | foil")
      ->required();
  eval->add_option("--ratings", e_ratings, "Ratings JSONL (kendall)");
  eval->add_option("--pairs", e_pairs, "Pairs JSONL (pascal)");
  eval->add_option("--foil", e_foil, "FOIL JSONL");
  eval->add_option("--checkpoint", e_ckpt, "Checkpoint directory (pascal/foil)");
  eval->add_option("--features", e_feat, "Image features JSONL (pascal/foil)");
  eval->add_option("--output", e_out, "Report CSV to append to");
  eval->add_option("--ref-mode", eopt.ref_mode, "FOIL reference mode: none | 1-ref | 4-ref");
  eval->add_flag("--refs", eopt.with_refs, "Use the reference-based metric");
  eval->add_option("--w", eopt.w, "Rescaling weight");
  eval->callback([&]() {
    eopt.ratings = e_ratings;
    eopt.pairs = e_pairs;
    eopt.foil = e_foil;
    eopt.checkpoint = e_ckpt;
    eopt.features = e_feat;
    eopt.output = e_out;
    const EvalRow row = run_eval(eopt);
    std::printf("eval: %s n=%ld %s\n", row.protocol.c_str(), row.n, row.stats.c_str());
  });

  // train-captioner
  auto* train = app.add_subcommand("train-captioner", "Cross-entropy then self-critical training");
  std::string t_config;
  double t_alpha = -1;
  std::int64_t t_seed = -1;
  train->add_option("--config", t_config, "Run config JSON")->required();
  train->add_option("--alpha", t_alpha, "Override the mixed-reward alpha");
  train->add_option("--seed", t_seed, "Override the config seed");
  train->callback([&]() {
    std::optional<double> alpha;
    if (t_alpha >= -0.5) alpha = t_alpha;  // explicit flag, may still be invalid
    std::optional<std::uint64_t> seed;
    if (t_seed >= 0) seed = static_cast<std::uint64_t>(t_seed);
    const CaptionerOutcome out = run_train_captioner(t_config, alpha, seed);
    const auto& last = out.log.back();
    std::printf("train-captioner: final cider=%s lclipscore=%s repetition=%s\n",
                format_double(last.cider).c_str(), format_double(last.lclipscore).c_str(),
                format_double(last.repetition).c_str());
  });

  // report
  auto* report = app.add_subcommand("report", "Merge run reports into one CSV + JSON summary");
  std::vector<std::string> r_dirs;
  std::string r_out;
  report->add_option("dirs", r_dirs, "Run directories")->required();
  report->add_option("--output", r_out, "Output directory")->required();
  report->callback([&]() {
    std::vector<fsys::path> dirs(r_dirs.begin(), r_dirs.end());
    const ReportOutcome out = run_report(dirs, r_out);
    std::printf("report: %ld runs, %ld rows\n", out.runs, out.rows);
  });

  return guarded([&]() {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }
    return 0;
  });
}
