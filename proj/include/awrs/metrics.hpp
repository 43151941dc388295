#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "awrs/corpus.hpp"
#include "awrs/model.hpp"
#include "awrs/stats.hpp"

namespace awrs {

// All three return nullopt for an impression the metric is undefined on (no positive,
// or for AUC also no negative). Labels are 0/1; anything nonzero counts as a click.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
// Ranks are 1-based under descending score; equal scores keep their original order.
std::optional<double> mrr(std::span<const double> scores, std::span<const std::uint8_t> labels);
std::optional<double> ndcg_at_k(std::span<const double> scores,
                                std::span<const std::uint8_t> labels, std::size_t k);

struct ImpressionMetrics {
  std::string impression_id;
  std::optional<double> auc;
  std::optional<double> mrr;
  std::optional<double> ndcg5;
  std::optional<double> ndcg10;
};

ImpressionMetrics score_impression(std::string impression_id, std::span<const double> scores,
                                   std::span<const std::uint8_t> labels);

struct MetricSummary {
  double mean = 0.0;
  std::size_t count = 0;  // impressions included in the mean
};

struct MetricReport {
  MetricSummary auc, mrr, ndcg5, ndcg10;
  std::size_t impressions = 0;      // records offered for evaluation
  std::size_t scored = 0;           // records actually scored
  std::size_t skipped_missing = 0;  // a candidate was not in the catalog
  std::uint64_t config_fingerprint = 0;
  std::vector<ImpressionMetrics> per_impression;
};

// Unweighted means over the included impressions.
MetricReport summarize(std::vector<ImpressionMetrics> rows);

// Scores every shown item of every record. Parallel over impressions when threads > 1;
// the result does not depend on the thread count.
template <typename Real>
MetricReport evaluate(const AwrsModel<Real>& model, std::span<const ImpressionRecord> log,
                      const NewsCatalog& catalog, const BucketTimeline& timeline,
                      std::size_t threads = 1);

std::string report_json(const MetricReport& report);
// "impression_id,auc,mrr,ndcg5,ndcg10"; undefined metrics are left empty.
void write_impression_csv(std::ostream& out, const MetricReport& report);

struct SeedAggregate {
  struct Stat {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single run
  };
  Stat auc, mrr, ndcg5, ndcg10;
  std::size_t runs = 0;
};

SeedAggregate aggregate(std::span<const MetricReport> reports);
std::string aggregate_json(const SeedAggregate& aggregate);

}  // namespace awrs
