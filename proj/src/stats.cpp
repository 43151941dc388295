#include "awrs/stats.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>

#include "awrs/error.hpp"

namespace awrs {

double epi_ratio(std::int64_t exposures, std::int64_t impressions) {
  if (impressions <= 0) return 0.0;
  return static_cast<double>(exposures) / static_cast<double>(impressions);
}

double avoidance_ratio(std::int64_t clicks, std::int64_t exposures) {
  if (exposures <= 0) return 1.0;
  return 1.0 - static_cast<double>(clicks) / static_cast<double>(exposures);
}

std::optional<std::size_t> StatsSnapshot::bucket() const {
  if (timeline_ == nullptr || bucket_ < 0) return std::nullopt;
  return static_cast<std::size_t>(bucket_);
}

std::int64_t StatsSnapshot::impressions() const {
  if (!bucket()) return 0;
  return timeline_->impressions_[static_cast<std::size_t>(bucket_)];
}

std::int64_t StatsSnapshot::max_clicks() const {
  if (!bucket()) return 0;
  return timeline_->max_clicks_[static_cast<std::size_t>(bucket_)];
}

std::int64_t StatsSnapshot::total_clicks() const {
  if (!bucket()) return 0;
  return timeline_->total_clicks_[static_cast<std::size_t>(bucket_)];
}

ArticleCounts StatsSnapshot::counts(std::string_view news_id) const {
  if (!bucket()) return {};
  const auto idx = timeline_->article_index(news_id);
  if (!idx) return {};
  return timeline_->counts_at(*idx, bucket_);
}

std::vector<std::pair<std::string_view, ArticleCounts>> StatsSnapshot::articles() const {
  std::vector<std::pair<std::string_view, ArticleCounts>> out;
  if (!bucket()) return out;
  for (std::size_t a = 0; a < timeline_->ids_.size(); ++a) {
    if (static_cast<std::ptrdiff_t>(timeline_->first_bucket_[a]) > bucket_) continue;
    out.emplace_back(timeline_->ids_[a], timeline_->counts_at(a, bucket_));
  }
  return out;
}

double epi(const StatsSnapshot& snapshot, std::string_view news_id) {
  return epi_ratio(snapshot.counts(news_id).exposures, snapshot.impressions());
}

double avoidance(const StatsSnapshot& snapshot, std::string_view news_id) {
  const auto c = snapshot.counts(news_id);
  return avoidance_ratio(c.clicks, c.exposures);
}

Timestamp BucketTimeline::boundary(std::size_t k) const {
  return origin_ + static_cast<Timestamp>(k + 1) * bucket_width_;
}

StatsSnapshot BucketTimeline::snapshot(std::size_t k) const {
  if (k >= size()) throw Error("snapshot index " + std::to_string(k) + " out of range");
  return StatsSnapshot(this, static_cast<std::ptrdiff_t>(k), boundary(k));
}

StatsSnapshot BucketTimeline::snapshot_at(Timestamp t) const {
  if (size() == 0 || t < boundary(0)) return StatsSnapshot(nullptr, -1, t);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>((t - origin_) / bucket_width_) - 1,
                                       size() - 1);
  return snapshot(k);
}

std::optional<std::size_t> BucketTimeline::article_index(std::string_view news_id) const {
  auto it = index_.find(std::string(news_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<Timestamp> BucketTimeline::first_exposure(std::string_view news_id) const {
  const auto idx = article_index(news_id);
  if (!idx) return std::nullopt;
  return first_seen_[*idx];
}

ArticleCounts BucketTimeline::counts_at(std::size_t article, std::ptrdiff_t bucket) const {
  const auto& points = series_[article];
  auto it = std::upper_bound(points.begin(), points.end(), bucket,
                             [](std::ptrdiff_t b, const ChangePoint& p) {
                               return b < static_cast<std::ptrdiff_t>(p.bucket);
                             });
  if (it == points.begin()) return {};
  return std::prev(it)->cumulative;
}

TimelineBuilder::TimelineBuilder(Timestamp bucket_width) {
  if (bucket_width <= 0) throw Error("bucket_width must be positive");
  timeline_.bucket_width_ = bucket_width;
}

void TimelineBuilder::close_buckets_through(std::size_t bucket) {
  while (timeline_.impressions_.size() <= bucket) {
    timeline_.impressions_.push_back(impressions_);
    timeline_.max_clicks_.push_back(max_clicks_);
    timeline_.total_clicks_.push_back(total_clicks_);
  }
}

void TimelineBuilder::add(const ImpressionRecord& record) {
  if (!started_) {
    started_ = true;
    timeline_.origin_ = record.time;
  } else if (record.time < last_time_) {
    throw Error("impression log is not sorted by time (record " + record.impression_id + ")");
  }
  last_time_ = record.time;
  const auto bucket =
      static_cast<std::size_t>((record.time - timeline_.origin_) / timeline_.bucket_width_);
  if (bucket > 0) close_buckets_through(bucket - 1);

  ++impressions_;
  auto& t = timeline_;
  for (const auto& item : record.shown) {
    auto [it, inserted] = t.index_.try_emplace(item.news_id, t.ids_.size());
    const std::size_t a = it->second;
    if (inserted) {
      t.ids_.push_back(item.news_id);
      t.first_seen_.push_back(record.time);
      t.first_bucket_.push_back(static_cast<std::uint32_t>(bucket));
      t.series_.emplace_back();
    }
    auto& points = t.series_[a];
    if (points.empty() || points.back().bucket != bucket) {
      const ArticleCounts prev = points.empty() ? ArticleCounts{} : points.back().cumulative;
      points.push_back({static_cast<std::uint32_t>(bucket), prev});
    }
    auto& c = points.back().cumulative;
    c.exposures += 1;
    c.clicks += item.label;
    total_clicks_ += item.label;
    max_clicks_ = std::max(max_clicks_, c.clicks);
  }
}

BucketTimeline TimelineBuilder::finish() && {
  if (started_) {
    close_buckets_through(
        static_cast<std::size_t>((last_time_ - timeline_.origin_) / timeline_.bucket_width_));
  }
  return std::move(timeline_);
}

BucketTimeline build_timeline(std::span<const ImpressionRecord> log, Timestamp bucket_width) {
  TimelineBuilder builder(bucket_width);
  for (const auto& record : log) builder.add(record);
  return std::move(builder).finish();
}

namespace {

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void write_snapshot_csv(std::ostream& out, const StatsSnapshot& snapshot) {
  out << "# awrs-stats v1\n";
  out << "t,news_id,n_E,n_clk,epi,avoidance,clicks_norm\n";
  const auto n_i = snapshot.impressions();
  out << snapshot.t() << ",*," << n_i << ',' << snapshot.total_clicks() << ",,,\n";
  const auto max_clicks = snapshot.max_clicks();
  for (const auto& [id, c] : snapshot.articles()) {
    const double norm =
        max_clicks > 0 ? static_cast<double>(c.clicks) / static_cast<double>(max_clicks) : 0.0;
    out << snapshot.t() << ',' << id << ',' << c.exposures << ',' << c.clicks << ','
        << shortest(epi_ratio(c.exposures, n_i)) << ','
        << shortest(avoidance_ratio(c.clicks, c.exposures)) << ',' << shortest(norm) << '\n';
  }
}

}  // namespace awrs
