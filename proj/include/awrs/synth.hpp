#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "awrs/corpus.hpp"

namespace awrs {

// Parameters of the synthetic click-log generator. Affinity matrices are D x D, row-major
// by flat grid index (D * epi_idx + av_idx).
struct SyntheticSpec {
  std::size_t n_users = 200;
  std::size_t n_articles = 300;
  std::size_t n_buckets = 48;
  Timestamp bucket_seconds = 3600;
  Timestamp start_time = 1573603200;  // 2019-11-13 00:00:00 UTC
  int D = 5;
  std::vector<double> affinity;      // empty = uniform
  std::vector<double> alt_affinity;  // for users outside the affinity group; empty = uniform
  double affinity_fraction = 0.5;    // share of users drawn into the `affinity` group
  double base_click_rate = 0.3;
  double freshness_half_life_hours = 0.0;  // 0 disables the age factor
  double exposure_decay_hours = 12.0;      // article exposure weight e-folding time
  double popularity_sigma = 1.0;           // log-normal spread of article exposure weight
  // Per-article click multiplier ~ Beta(appeal_alpha, appeal_beta); alpha 0 disables it.
  double appeal_alpha = 0.0;
  double appeal_beta = 1.0;
  double user_arrival_span = 0.0;          // users arrive uniformly over this fraction of buckets
  std::size_t impressions_per_bucket = 40;
  std::size_t shown_per_impression = 10;
  std::size_t categories = 8;
  std::size_t words_per_category = 40;
  std::size_t title_len = 8;
  std::uint64_t seed = 1;
};

// Throws Error on unknown keys or invalid values, including an all-zero affinity.
SyntheticSpec parse_synthetic_spec(std::string_view json_text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
std::string to_json(const SyntheticSpec& spec);

struct SyntheticArticle {
  std::string news_id;
  std::string category;
  std::string title;
  std::size_t publish_bucket = 0;
};

// Generator-side truth for every shown item, in record order.
struct ShownTruth {
  std::size_t record = 0;
  std::size_t position = 0;
  int cell = 0;
  bool in_affinity_group = false;
  double click_probability = 0.0;
};

struct SyntheticCorpus {
  std::vector<SyntheticArticle> articles;
  std::vector<ImpressionRecord> records;  // time-sorted; every record has a click
  std::vector<ShownTruth> truth;
  std::size_t dropped_impressions = 0;    // drawn but without any click
};

SyntheticCorpus generate(const SyntheticSpec& spec);

// MIND-format news.tsv (8 columns, empty entity fields).
void write_news_tsv(std::ostream& out, const std::vector<SyntheticArticle>& articles);
// Writes news.tsv and behaviors.tsv into `dir`, creating it if needed.
void write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace awrs
