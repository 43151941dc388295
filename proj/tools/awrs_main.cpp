// awrs: statistics export, synthetic data, training, evaluation and ablation.

#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "awrs/commands.hpp"
#include "awrs/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<long long> bucket_width;
  std::optional<int> grid_d;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;

  awrs::Overrides overrides() const {
    awrs::Overrides o;
    if (bucket_width) o.bucket_width = *bucket_width;
    o.grid_d = grid_d;
    o.seed = seed;
    if (mode) o.mode = awrs::parse_mode(*mode);
    return o;
  }
};

void add_common(CLI::App* cmd, Flags& f, bool with_mode) {
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--seed", f.seed, "Random seed (overrides the config)");
  cmd->add_option("--grid-d", f.grid_d, "Engagement grid size D")->check(CLI::PositiveNumber);
  cmd->add_option("--bucket-width", f.bucket_width, "Statistics bucket width in seconds")
      ->check(CLI::PositiveNumber);
  if (with_mode) {
    cmd->add_option("--mode", f.mode, "Ablation mode")
        ->check(CLI::IsMember({"full", "only_rel", "only_avoid"}));
  }
}

void print_report(const awrs::MetricReport& r) {
  std::printf("AUC %.4f  MRR %.4f  nDCG@5 %.4f  nDCG@10 %.4f  (%zu impressions, %zu skipped)\n",
              r.auc.mean, r.mrr.mean, r.ndcg5.mean, r.ndcg10.mean, r.scored, r.skipped_missing);
}

awrs::TrainConfig load_config(const Flags& f) {
  auto config = awrs::load_train_config(f.config);
  awrs::apply(f.overrides(), config);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Avoidance-aware news recommendation toolkit"};
  app.require_subcommand(1);
  Flags f;

  std::string behaviors;
  auto* stats = app.add_subcommand("stats", "Export per-bucket avoidance statistics and grid counts");
  stats->alias("plot-data");
  stats->add_option("behaviors", behaviors, "behaviors.tsv or .jsonl")->required()->check(CLI::ExistingFile);
  add_common(stats, f, false);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic MIND-format corpus");
  synth->add_option("--config", f.config, "Synthetic spec (JSON)")->required()->check(CLI::ExistingFile);
  add_common(synth, f, false);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", f.config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  add_common(train, f, true);

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a held-out split");
  eval->add_option("--config", f.config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "model.ckpt from train")->required()->check(CLI::ExistingFile);
  std::string split = "auto";
  eval->add_option("--split", split, "Split to score")
      ->check(CLI::IsMember({"auto", "valid", "test"}))
      ->capture_default_str();
  add_common(eval, f, true);

  std::size_t runs = 1;
  auto* ablate = app.add_subcommand("ablate", "Train and test full, only_rel and only_avoid");
  ablate->add_option("--config", f.config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--runs", runs, "Seeds per mode, starting at --seed")->check(CLI::PositiveNumber);
  add_common(ablate, f, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (stats->parsed()) {
      const auto s = awrs::cmd_stats(behaviors, f.bucket_width.value_or(3600), f.grid_d.value_or(5), f.out);
      std::printf("%zu records, %zu buckets, %zu rows skipped -> %s\n", s.records, s.buckets,
                  s.skipped_rows, f.out.c_str());
    } else if (synth->parsed()) {
      auto spec = awrs::load_synthetic_spec(f.config);
      awrs::apply(f.overrides(), spec);
      const auto corpus = awrs::cmd_synth(spec, f.out);
      std::printf("%zu articles, %zu impressions (%zu without clicks dropped) -> %s\n",
                  corpus.articles.size(), corpus.records.size(), corpus.dropped_impressions,
                  f.out.c_str());
    } else if (train->parsed()) {
      const auto outcome = awrs::cmd_train(load_config(f), f.out);
      const auto& r = outcome.result;
      std::printf("%zu steps, %zu epochs, best epoch %zu (val AUC %.4f)%s\n", r.steps,
                  r.epochs.size(), r.best_epoch, r.best_val_auc,
                  r.stopped_early ? ", stopped early" : "");
      if (outcome.test) print_report(*outcome.test);
    } else if (eval->parsed()) {
      std::optional<awrs::Mode> mode;
      if (f.mode) mode = awrs::parse_mode(*f.mode);
      const auto which = split == "valid"  ? awrs::EvalSplit::valid
                         : split == "test" ? awrs::EvalSplit::test
                                           : awrs::EvalSplit::automatic;
      print_report(awrs::cmd_eval(load_config(f), checkpoint, f.out, mode, which));
    } else if (ablate->parsed()) {
      const auto rows = awrs::cmd_ablate(load_config(f), f.out, runs);
      std::fputs(awrs::format_ablation(rows).c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "awrs: %s\n", e.what());
    return 1;
  }
  return 0;
}
