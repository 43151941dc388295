#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "awrs/corpus.hpp"

namespace awrs {

struct ArticleCounts {
  std::int64_t exposures = 0;  // n_E
  std::int64_t clicks = 0;     // n_clk

  friend bool operator==(const ArticleCounts&, const ArticleCounts&) = default;
};

// n_E / n_I, or 0 when there are no impressions yet.
double epi_ratio(std::int64_t exposures, std::int64_t impressions);
// 1 - n_clk / n_E, or 1 for an article that was never exposed.
double avoidance_ratio(std::int64_t clicks, std::int64_t exposures);

class BucketTimeline;

// Cumulative counters frozen at one bucket boundary. A snapshot is a view into its
// timeline and must not outlive it. A default-constructed snapshot is all zeros.
class StatsSnapshot {
 public:
  StatsSnapshot() = default;

  Timestamp t() const { return t_; }
  // Index of the boundary this snapshot belongs to, or nullopt for the zero snapshot.
  std::optional<std::size_t> bucket() const;
  std::int64_t impressions() const;
  ArticleCounts counts(std::string_view news_id) const;
  // Largest n_clk over all articles in this snapshot.
  std::int64_t max_clicks() const;
  std::int64_t total_clicks() const;
  // Articles exposed at least once, in first-exposure order.
  std::vector<std::pair<std::string_view, ArticleCounts>> articles() const;

 private:
  friend class BucketTimeline;
  StatsSnapshot(const BucketTimeline* timeline, std::ptrdiff_t bucket, Timestamp t)
      : timeline_(timeline), bucket_(bucket), t_(t) {}

  const BucketTimeline* timeline_ = nullptr;
  std::ptrdiff_t bucket_ = -1;
  Timestamp t_ = 0;
};

double epi(const StatsSnapshot& snapshot, std::string_view news_id);
double avoidance(const StatsSnapshot& snapshot, std::string_view news_id);

// Boundary k sits at origin + (k + 1) * bucket_width and aggregates every record with
// time < boundary. Per-article counters are stored as sparse change points.
class BucketTimeline {
 public:
  BucketTimeline() = default;

  Timestamp bucket_width() const { return bucket_width_; }
  Timestamp origin() const { return origin_; }
  std::size_t size() const { return impressions_.size(); }
  Timestamp boundary(std::size_t k) const;

  StatsSnapshot snapshot(std::size_t k) const;
  // Snapshot with the largest boundary <= t; the zero snapshot before the first boundary.
  StatsSnapshot snapshot_at(Timestamp t) const;

  std::size_t num_articles() const { return ids_.size(); }
  std::optional<std::size_t> article_index(std::string_view news_id) const;
  std::optional<Timestamp> first_exposure(std::string_view news_id) const;

 private:
  friend class TimelineBuilder;
  friend class StatsSnapshot;

  struct ChangePoint {
    std::uint32_t bucket;
    ArticleCounts cumulative;
  };

  ArticleCounts counts_at(std::size_t article, std::ptrdiff_t bucket) const;

  Timestamp bucket_width_ = 3600;
  Timestamp origin_ = 0;
  std::vector<std::int64_t> impressions_;  // cumulative n_I per boundary
  std::vector<std::int64_t> max_clicks_;   // per boundary
  std::vector<std::int64_t> total_clicks_; // cumulative, per boundary
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Timestamp> first_seen_;
  std::vector<std::uint32_t> first_bucket_;
  std::vector<std::vector<ChangePoint>> series_;
};

// Streams records in time order into a timeline.
class TimelineBuilder {
 public:
  explicit TimelineBuilder(Timestamp bucket_width);

  // Throws Error if `record` is older than the previous one.
  void add(const ImpressionRecord& record);
  BucketTimeline finish() &&;

 private:
  void close_buckets_through(std::size_t bucket);

  BucketTimeline timeline_;
  bool started_ = false;
  Timestamp last_time_ = 0;
  std::int64_t impressions_ = 0;
  std::int64_t max_clicks_ = 0;
  std::int64_t total_clicks_ = 0;
};

// Throws Error on an unsorted log or a non-positive bucket width.
BucketTimeline build_timeline(std::span<const ImpressionRecord> log, Timestamp bucket_width);

// "t,news_id,n_E,n_clk,epi,avoidance,clicks_norm" preceded by a "# awrs-stats v1" line.
// The row with news_id "*" carries n_I in the n_E column and total clicks in n_clk.
void write_snapshot_csv(std::ostream& out, const StatsSnapshot& snapshot);

}  // namespace awrs
