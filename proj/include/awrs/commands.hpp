#pragma once

// The operations behind the `awrs` subcommands, callable without a process boundary.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "awrs/config.hpp"
#include "awrs/metrics.hpp"
#include "awrs/synth.hpp"
#include "awrs/training.hpp"

namespace awrs {

// Command-line values that take precedence over config files.
struct Overrides {
  std::optional<Timestamp> bucket_width;
  std::optional<int> grid_d;
  std::optional<std::uint64_t> seed;
  std::optional<Mode> mode;
};

void apply(const Overrides& o, TrainConfig& config);
void apply(const Overrides& o, SyntheticSpec& spec);

struct StatsSummary {
  std::size_t records = 0;
  std::size_t buckets = 0;
  std::size_t skipped_rows = 0;
};

// Writes stats_NNNN.csv and grid_NNNN.csv for every bucket boundary.
StatsSummary cmd_stats(const std::filesystem::path& behaviors, Timestamp bucket_width, int grid_d,
                       const std::filesystem::path& out_dir);

// Writes news.tsv, behaviors.tsv and the effective spec.json.
SyntheticCorpus cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

struct TrainOutcome {
  TrainResult result;
  std::optional<MetricReport> test;  // when a test split exists
  std::filesystem::path checkpoint;
};

// Writes train_log.csv, model.ckpt and, with a test split, report.json + impressions.csv.
TrainOutcome cmd_train(const TrainConfig& config, const std::filesystem::path& out_dir);

// automatic = the test split, or validation when there is no test split.
enum class EvalSplit { automatic, valid, test };

// Scores a split with a saved checkpoint. The model shape comes from the checkpoint;
// `mode` overrides its ablation mode.
MetricReport cmd_eval(const TrainConfig& config, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& out_dir, std::optional<Mode> mode = {},
                      EvalSplit split = EvalSplit::automatic);

struct AblationRow {
  Mode mode = Mode::full;
  SeedAggregate metrics;
  std::vector<MetricReport> runs;
};

// Trains and tests every mode for `runs` consecutive seeds starting at config.seed.
// Writes ablation.csv and ablation.json.
std::vector<AblationRow> cmd_ablate(const TrainConfig& config, const std::filesystem::path& out_dir,
                                    std::size_t runs = 1);

// Fixed-width table, one row per mode.
std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace awrs
