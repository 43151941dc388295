#include "awrs/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "awrs/error.hpp"

namespace awrs {

namespace {

void check_lengths(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw Error("metric input has " + std::to_string(scores.size()) + " scores but " +
                std::to_string(labels.size()) + " labels");
  }
}

// Candidate indices by descending score, ties in original order.
std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Mann-Whitney U with average ranks for ties.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const auto negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(negatives));
}

std::optional<double> mrr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const auto order = ranking(scores);
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] != 0) {
      total += 1.0 / static_cast<double>(r + 1);
      ++positives;
    }
  }
  if (positives == 0) return std::nullopt;
  return total / static_cast<double>(positives);
}

std::optional<double> ndcg_at_k(std::span<const double> scores,
                                std::span<const std::uint8_t> labels, std::size_t k) {
  check_lengths(scores, labels);
  if (k == 0) throw Error("ndcg cutoff k must be >= 1");
  const auto order = ranking(scores);
  const auto positives = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (positives == 0) return std::nullopt;
  const auto cutoff = std::min(k, order.size());
  double dcg = 0.0, ideal = 0.0;
  for (std::size_t r = 0; r < cutoff; ++r) {
    const double discount = std::log2(static_cast<double>(r + 2));
    if (labels[order[r]] != 0) dcg += 1.0 / discount;
    if (r < positives) ideal += 1.0 / discount;
  }
  return dcg / ideal;
}

ImpressionMetrics score_impression(std::string impression_id, std::span<const double> scores,
                                   std::span<const std::uint8_t> labels) {
  ImpressionMetrics m;
  m.impression_id = std::move(impression_id);
  m.auc = auc(scores, labels);
  m.mrr = mrr(scores, labels);
  m.ndcg5 = ndcg_at_k(scores, labels, 5);
  m.ndcg10 = ndcg_at_k(scores, labels, 10);
  return m;
}

MetricReport summarize(std::vector<ImpressionMetrics> rows) {
  MetricReport report;
  const auto add = [](MetricSummary& s, const std::optional<double>& v) {
    if (!v) return;
    s.mean += *v;
    ++s.count;
  };
  for (const auto& row : rows) {
    add(report.auc, row.auc);
    add(report.mrr, row.mrr);
    add(report.ndcg5, row.ndcg5);
    add(report.ndcg10, row.ndcg10);
  }
  for (auto* s : {&report.auc, &report.mrr, &report.ndcg5, &report.ndcg10}) {
    if (s->count > 0) s->mean /= static_cast<double>(s->count);
  }
  report.scored = rows.size();
  report.impressions = rows.size();
  report.per_impression = std::move(rows);
  return report;
}

template <typename Real>
MetricReport evaluate(const AwrsModel<Real>& model, std::span<const ImpressionRecord> log,
                      const NewsCatalog& catalog, const BucketTimeline& timeline,
                      std::size_t threads) {
  const auto& config = model.config();
  std::vector<std::optional<ImpressionMetrics>> slots(log.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    std::vector<std::size_t> all;
    std::vector<std::uint8_t> labels;
    for (auto i = next.fetch_add(1); i < log.size(); i = next.fetch_add(1)) {
      const auto& record = log[i];
      all.resize(record.shown.size());
      std::iota(all.begin(), all.end(), 0);
      const auto input =
          make_input(record, all, catalog, timeline, config.grid_d, config.history_len);
      if (!input) continue;
      labels.clear();
      for (const auto& item : record.shown) labels.push_back(item.label);
      const auto scores = model.predict(*input);
      slots[i] = score_impression(record.impression_id, scores, labels);
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, log.size()));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }

  std::vector<ImpressionMetrics> rows;
  std::size_t skipped = 0;
  for (auto& slot : slots) {
    if (slot) {
      rows.push_back(std::move(*slot));
    } else {
      ++skipped;
    }
  }
  auto report = summarize(std::move(rows));
  report.impressions = log.size();
  report.skipped_missing = skipped;
  return report;
}

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  const auto metric = [](const MetricSummary& s) {
    return nlohmann::ordered_json{{"mean", s.mean}, {"count", s.count}};
  };
  j["auc"] = metric(report.auc);
  j["mrr"] = metric(report.mrr);
  j["ndcg@5"] = metric(report.ndcg5);
  j["ndcg@10"] = metric(report.ndcg10);
  j["impressions"] = report.impressions;
  j["scored"] = report.scored;
  j["skipped_missing_candidate"] = report.skipped_missing;
  j["excluded"] = {{"auc", report.scored - report.auc.count},
                   {"mrr", report.scored - report.mrr.count},
                   {"ndcg", report.scored - report.ndcg5.count}};
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(report.config_fingerprint));
  j["config_fingerprint"] = hex;
  return j.dump(2);
}

void write_impression_csv(std::ostream& out, const MetricReport& report) {
  out << "impression_id,auc,mrr,ndcg5,ndcg10\n";
  const auto cell = [&](const std::optional<double>& v) {
    if (v) out << format_double(*v);
  };
  for (const auto& row : report.per_impression) {
    out << row.impression_id << ',';
    cell(row.auc);
    out << ',';
    cell(row.mrr);
    out << ',';
    cell(row.ndcg5);
    out << ',';
    cell(row.ndcg10);
    out << '\n';
  }
}

SeedAggregate aggregate(std::span<const MetricReport> reports) {
  SeedAggregate agg;
  agg.runs = reports.size();
  const auto stat = [&](auto member) {
    SeedAggregate::Stat s;
    if (reports.empty()) return s;
    for (const auto& r : reports) s.mean += (r.*member).mean;
    s.mean /= static_cast<double>(reports.size());
    if (reports.size() > 1) {
      double ss = 0.0;
      for (const auto& r : reports) ss += ((r.*member).mean - s.mean) * ((r.*member).mean - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(reports.size() - 1));
    }
    return s;
  };
  agg.auc = stat(&MetricReport::auc);
  agg.mrr = stat(&MetricReport::mrr);
  agg.ndcg5 = stat(&MetricReport::ndcg5);
  agg.ndcg10 = stat(&MetricReport::ndcg10);
  return agg;
}

std::string aggregate_json(const SeedAggregate& agg) {
  nlohmann::ordered_json j;
  const auto stat = [](const SeedAggregate::Stat& s) {
    return nlohmann::ordered_json{{"mean", s.mean}, {"std", s.std}};
  };
  j["runs"] = agg.runs;
  j["auc"] = stat(agg.auc);
  j["mrr"] = stat(agg.mrr);
  j["ndcg@5"] = stat(agg.ndcg5);
  j["ndcg@10"] = stat(agg.ndcg10);
  return j.dump(2);
}

template MetricReport evaluate<float>(const AwrsModel<float>&, std::span<const ImpressionRecord>,
                                      const NewsCatalog&, const BucketTimeline&, std::size_t);
template MetricReport evaluate<double>(const AwrsModel<double>&, std::span<const ImpressionRecord>,
                                       const NewsCatalog&, const BucketTimeline&, std::size_t);

}  // namespace awrs
