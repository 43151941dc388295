#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "awrs/autodiff.hpp"
#include "awrs/config.hpp"
#include "awrs/corpus.hpp"
#include "awrs/grid.hpp"
#include "awrs/news_encoder.hpp"
#include "awrs/relevance.hpp"
#include "awrs/stats.hpp"
#include "awrs/user_encoder.hpp"

namespace awrs {

// What the model may know about an article at impression time.
struct ArticleFeatures {
  std::int32_t cell = 0;       // i_ue
  double elapsed_hours = 0.0;  // since publication (or first exposure), >= 0
  double clicks_norm = 0.0;    // log1p(n_clk) / log1p(max n_clk), in [0, 1]
};

// Features from the snapshot in force at time t. Articles without a publish time use
// their first exposure as publication; one first seen at or after t has elapsed 0.
ArticleFeatures article_features(const NewsArticle& article, const BucketTimeline& timeline,
                                 Timestamp t, int D);

// One user/time context and a list of candidates to score against it.
struct ScoringInput {
  std::vector<const NewsArticle*> history;  // oldest first
  std::vector<std::int32_t> history_cells;
  std::vector<const NewsArticle*> candidates;
  std::vector<ArticleFeatures> features;  // one per candidate
};

// Builds the input for `record` restricted to `candidates` (indices into record.shown).
// History ids missing from the catalog are dropped; only the most recent
// `history_len` survive. Returns nullopt if any candidate is missing from the catalog.
std::optional<ScoringInput> make_input(const ImpressionRecord& record,
                                       std::span<const std::size_t> candidates,
                                       const NewsCatalog& catalog, const BucketTimeline& timeline,
                                       int D, std::size_t history_len);

template <typename Real>
class AwrsModel {
 public:
  // Per-tape memo of news encodings, so articles shared within a batch are encoded once.
  using NewsCache = std::unordered_map<const NewsArticle*, ad::Var<Real>>;

  struct Detail {
    ad::Var<Real> scores;  // 1 x C
    typename RelevancePredictor<Real>::Output relevance;
    std::vector<typename UserEncoder<Real>::Output> user;  // empty for a cold user
  };

  AwrsModel(const ModelConfig& config, std::uint64_t seed);
  AwrsModel(const AwrsModel&) = delete;
  AwrsModel& operator=(const AwrsModel&) = delete;

  const ModelConfig& config() const { return config_; }
  Mode mode() const { return config_.mode; }
  void set_mode(Mode mode) { config_.mode = mode; }

  ad::ParameterStore<Real>& parameters() { return store_; }
  const ad::ParameterStore<Real>& parameters() const { return store_; }
  NewsEncoder<Real>& news_encoder() { return *news_; }
  EngagementTable<Real>& engagement() { return *engagement_; }
  RelevancePredictor<Real>& relevance() { return *relevance_; }
  UserEncoder<Real>& user_encoder() { return *user_; }

  // Interest scores Int_s for every candidate, 1 x C.
  ad::Var<Real> score(ad::Tape<Real>& tape, const ScoringInput& input,
                      AttentionProbe<Real>* probe = nullptr, NewsCache* cache = nullptr) const;
  Detail score_detailed(ad::Tape<Real>& tape, const ScoringInput& input,
                        AttentionProbe<Real>* probe = nullptr, NewsCache* cache = nullptr) const;

  // Forward pass only; convenient for evaluation.
  std::vector<double> predict(const ScoringInput& input) const;

  // Copies the word rows of a pretrained matrix (rows x word_dim) into the embedding table.
  void load_word_embeddings(const EmbeddingMatrix& matrix);

 private:
  ad::Var<Real> encode(ad::Tape<Real>& tape, std::span<const NewsArticle* const> articles,
                       AttentionProbe<Real>* probe, NewsCache* cache) const;

  ModelConfig config_;
  ad::ParameterStore<Real> store_;
  std::unique_ptr<NewsEncoder<Real>> news_;
  std::unique_ptr<EngagementTable<Real>> engagement_;
  std::unique_ptr<RelevancePredictor<Real>> relevance_;
  std::unique_ptr<UserEncoder<Real>> user_;
};

// Sizes the news encoder from a catalog (vocabulary, categories, entities).
void fit_to_catalog(ModelConfig& config, const NewsCatalog& catalog);

}  // namespace awrs
