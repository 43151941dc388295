#include "awrs/commands.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "awrs/checkpoint.hpp"
#include "awrs/error.hpp"
#include "awrs/grid.hpp"

namespace awrs {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string bucket_name(const char* stem, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.csv", stem, k);
  return buf;
}

const std::vector<ImpressionRecord>& scoring_split(const Dataset& d, EvalSplit split) {
  switch (split) {
    case EvalSplit::valid:
      if (d.valid.empty()) throw Error("the config has no validation split");
      return d.valid;
    case EvalSplit::test:
      if (d.test.empty()) throw Error("the config has no test split");
      return d.test;
    case EvalSplit::automatic:
      break;
  }
  return d.test.empty() ? d.valid : d.test;
}

std::string checkpoint_meta(const TrainConfig& config, const ModelConfig& model,
                            const TrainResult* result) {
  nlohmann::ordered_json j;
  j["model"] = nlohmann::ordered_json::parse(to_json(model));
  j["train"] = nlohmann::ordered_json::parse(to_json(config));
  if (result != nullptr) {
    j["best_epoch"] = result->best_epoch;
    j["best_val_auc"] = result->best_val_auc;
    j["steps"] = result->steps;
  }
  return j.dump();
}

void write_report(const MetricReport& report, const fs::path& out_dir) {
  auto json_out = open_out(out_dir / "report.json");
  json_out << report_json(report) << '\n';
  auto csv = open_out(out_dir / "impressions.csv");
  write_impression_csv(csv, report);
}

template <typename Real>
TrainOutcome train_with(const TrainConfig& config, const Dataset& data, const fs::path& out_dir) {
  ModelConfig mcfg = config.model;
  fit_to_catalog(mcfg, data.catalog);
  AwrsModel<Real> model(mcfg, config.seed);
  if (!config.data.word_vectors.empty()) {
    model.load_word_embeddings(load_word_vectors(config.data.word_vectors, data.catalog.vocab,
                                                 mcfg.news.word_dim, config.seed));
  }
  TrainOutcome out;
  {
    auto log = open_out(out_dir / "train_log.csv");
    out.result = train(model, config, data, &log);
  }
  out.checkpoint = out_dir / "model.ckpt";
  save_checkpoint(out.checkpoint, model.parameters(), checkpoint_meta(config, mcfg, &out.result));
  if (!data.test.empty()) {
    auto report = evaluate(model, data.test, data.catalog, data.timeline, config.threads);
    report.config_fingerprint = fingerprint(config);
    write_report(report, out_dir);
    out.test = std::move(report);
  }
  return out;
}

template <typename Real>
MetricReport eval_with(const TrainConfig& config, const ModelConfig& mcfg, const Checkpoint& ck,
                       const Dataset& data, EvalSplit split) {
  AwrsModel<Real> model(mcfg, config.seed);
  load_parameters(ck, model.parameters());
  auto report = evaluate(model, scoring_split(data, split), data.catalog, data.timeline, config.threads);
  report.config_fingerprint = fingerprint(config);
  return report;
}

}  // namespace

void apply(const Overrides& o, TrainConfig& config) {
  if (o.bucket_width) config.bucket_width = *o.bucket_width;
  if (o.grid_d) config.model.grid_d = *o.grid_d;
  if (o.seed) config.seed = *o.seed;
  if (o.mode) config.model.mode = *o.mode;
  validate(config);
}

void apply(const Overrides& o, SyntheticSpec& spec) {
  if (o.grid_d) spec.D = *o.grid_d;
  if (o.seed) spec.seed = *o.seed;
  if (o.bucket_width) spec.bucket_seconds = *o.bucket_width;
}

StatsSummary cmd_stats(const fs::path& behaviors, Timestamp bucket_width, int grid_d,
                       const fs::path& out_dir) {
  if (grid_d < 1) throw Error("grid size D must be >= 1");
  ParseReport report;
  const auto log = parse_behaviors_file(behaviors.string(), &report);
  const auto timeline = build_timeline(log, bucket_width);
  fs::create_directories(out_dir);
  for (std::size_t k = 0; k < timeline.size(); ++k) {
    const auto snapshot = timeline.snapshot(k);
    auto stats = open_out(out_dir / bucket_name("stats", k));
    write_snapshot_csv(stats, snapshot);
    auto grid = open_out(out_dir / bucket_name("grid", k));
    write_grid_csv(grid, snapshot, grid_d);
  }
  return {log.size(), timeline.size(), report.rows_skipped};
}

SyntheticCorpus cmd_synth(const SyntheticSpec& spec, const fs::path& out_dir) {
  auto corpus = generate(spec);
  write_corpus(corpus, out_dir);
  auto out = open_out(out_dir / "spec.json");
  out << to_json(spec) << '\n';
  return corpus;
}

TrainOutcome cmd_train(const TrainConfig& config, const fs::path& out_dir) {
  validate(config);
  const auto data = load_dataset(config.data, config.bucket_width);
  fs::create_directories(out_dir);
  return config.use_double ? train_with<double>(config, data, out_dir)
                           : train_with<float>(config, data, out_dir);
}

MetricReport cmd_eval(const TrainConfig& config, const fs::path& checkpoint, const fs::path& out_dir,
                      std::optional<Mode> mode, EvalSplit split) {
  const auto ck = read_checkpoint(checkpoint);
  ModelConfig mcfg;
  try {
    mcfg = parse_model_config(nlohmann::json::parse(ck.meta).at("model").dump());
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint metadata is unreadable: " + std::string(e.what()));
  }
  if (mode) mcfg.mode = *mode;
  const auto data = load_dataset(config.data, config.bucket_width);
  if (data.catalog.vocab.size() != mcfg.news.vocab_size) {
    throw Error("news file yields a vocabulary of " + std::to_string(data.catalog.vocab.size()) +
                " tokens but the checkpoint was trained with " +
                std::to_string(mcfg.news.vocab_size));
  }
  fs::create_directories(out_dir);
  const bool wide = !ck.tensors.empty() && ck.tensors.front().element_bytes == 8;
  auto report = wide ? eval_with<double>(config, mcfg, ck, data, split)
              : eval_with<float>(config, mcfg, ck, data, split);
  write_report(report, out_dir);
  return report;
}

std::vector<AblationRow> cmd_ablate(const TrainConfig& config, const fs::path& out_dir,
                                    std::size_t runs) {
  if (runs < 1) throw Error("ablation needs at least one run");
  const auto data = load_dataset(config.data, config.bucket_width);
  if (data.test.empty()) throw Error("ablation needs a test split");
  std::vector<AblationRow> rows;
  for (const Mode mode : {Mode::full, Mode::only_rel, Mode::only_avoid}) {
    AblationRow row;
    row.mode = mode;
    for (std::size_t r = 0; r < runs; ++r) {
      TrainConfig c = config;
      c.model.mode = mode;
      c.seed = config.seed + r;
      const auto dir = out_dir / (std::string(to_string(mode)) + "_seed" + std::to_string(c.seed));
      fs::create_directories(dir);
      auto outcome = c.use_double ? train_with<double>(c, data, dir) : train_with<float>(c, data, dir);
      row.runs.push_back(std::move(*outcome.test));
    }
    row.metrics = aggregate(row.runs);
    rows.push_back(std::move(row));
  }

  auto csv = open_out(out_dir / "ablation.csv");
  csv << "mode,runs,auc,auc_std,mrr,mrr_std,ndcg5,ndcg5_std,ndcg10,ndcg10_std\n";
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    csv << to_string(row.mode) << ',' << m.runs << ',' << m.auc.mean << ',' << m.auc.std << ','
        << m.mrr.mean << ',' << m.mrr.std << ',' << m.ndcg5.mean << ',' << m.ndcg5.std << ','
        << m.ndcg10.mean << ',' << m.ndcg10.std << '\n';
    auto entry = nlohmann::ordered_json::parse(aggregate_json(m));
    entry["mode"] = std::string(to_string(row.mode));
    j.push_back(entry);
  }
  auto js = open_out(out_dir / "ablation.json");
  js << j.dump(2) << '\n';
  return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-11s %16s %16s %16s %16s\n", "mode", "AUC", "MRR", "nDCG@5",
                "nDCG@10");
  out << line;
  const auto cell = [](const SeedAggregate::Stat& s) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f+-%.2f", 100.0 * s.mean, 100.0 * s.std);
    return std::string(buf);
  };
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    std::snprintf(line, sizeof line, "%-11s %16s %16s %16s %16s\n",
                  std::string(to_string(row.mode)).c_str(), cell(m.auc).c_str(),
                  cell(m.mrr).c_str(), cell(m.ndcg5).c_str(), cell(m.ndcg10).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace awrs
