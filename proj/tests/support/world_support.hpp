#pragma once

// A small synthetic corpus written to disk and loaded back, shared by model-level tests.

#include "awrs/synth.hpp"
#include "awrs/training.hpp"
#include "test_support.hpp"

namespace testing_support {

inline awrs::SyntheticSpec tiny_spec(std::uint64_t seed = 1) {
  awrs::SyntheticSpec s;
  s.n_users = 30;
  s.n_articles = 40;
  s.n_buckets = 12;
  s.impressions_per_bucket = 12;
  s.shown_per_impression = 6;
  s.categories = 4;
  s.words_per_category = 10;
  s.title_len = 5;
  s.seed = seed;
  return s;
}

inline awrs::ModelConfig tiny_model(const awrs::NewsCatalog& catalog) {
  awrs::ModelConfig m;
  m.news.word_dim = 6;
  m.news.news_dim = 8;
  m.news.heads = 2;
  m.news.attention_hidden = 4;
  m.news.category_dim = 3;
  m.news.entity_dim = 2;
  m.ue_dim = 4;
  m.time_dim = 3;
  m.user_heads = 3;
  m.window = 1;
  m.user_attention_hidden = 4;
  m.history_len = 6;
  awrs::fit_to_catalog(m, catalog);
  return m;
}

struct World {
  TempDir dir{"world"};
  awrs::SyntheticSpec spec;
  awrs::Dataset data;

  explicit World(awrs::SyntheticSpec s = tiny_spec()) : spec(std::move(s)) {
    awrs::write_corpus(awrs::generate(spec), dir.path());
    auto catalog = awrs::parse_news_file((dir.path() / "news.tsv").string(), 30);
    auto log = awrs::parse_behaviors_file((dir.path() / "behaviors.tsv").string());
    const auto hour = spec.bucket_seconds;
    data = awrs::make_dataset(std::move(catalog), std::move(log),
                              spec.start_time + hour * spec.n_buckets * 2 / 3,
                              spec.start_time + hour * spec.n_buckets * 5 / 6, hour);
  }
};

}  // namespace testing_support
