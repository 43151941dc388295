#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "awrs/autodiff.hpp"
#include "awrs/corpus.hpp"

namespace awrs {

struct NewsEncoderConfig {
  std::size_t vocab_size = 2;
  std::size_t num_categories = 1;
  std::size_t num_entities = 0;
  std::size_t word_dim = 300;
  std::size_t news_dim = 256;      // d_news
  std::size_t heads = 8;           // title self-attention heads
  std::size_t attention_hidden = 128;
  std::size_t category_dim = 100;
  std::size_t entity_dim = 100;
  bool use_entities = true;
  bool train_word_embeddings = true;
};

// Softmax outputs captured during a forward pass, for invariant checks.
template <typename Real>
struct AttentionProbe {
  struct Entry {
    std::string where;
    ad::Var<Real> weights;
    ad::Mask mask;
  };
  std::vector<Entry> entries;

  void add(std::string where, ad::Var<Real> weights, ad::Mask mask = {}) {
    entries.push_back({std::move(where), weights, std::move(mask)});
  }
};

// Title encoder (multi-head self-attention + additive attention pooling) combined with
// category and entity channels through a dense layer.
template <typename Real>
class NewsEncoder {
 public:
  NewsEncoder(const NewsEncoderConfig& config, ad::ParameterStore<Real>& store,
              std::mt19937_64& rng);

  const NewsEncoderConfig& config() const { return config_; }
  ad::Parameter<Real>& word_embeddings() { return *word_; }
  ad::Parameter<Real>& category_embeddings() { return *category_; }
  ad::Parameter<Real>* entity_embeddings() { return entity_; }

  // 1 x news_dim. PAD tokens are masked out of both attentions; an all-PAD title
  // encodes to the zero vector.
  ad::Var<Real> encode_title(ad::Tape<Real>& tape, std::span<const std::int32_t> tokens,
                             AttentionProbe<Real>* probe = nullptr) const;
  // 1 x news_dim. Throws Error for an unknown category id.
  ad::Var<Real> encode_news(ad::Tape<Real>& tape, const NewsArticle& article,
                            AttentionProbe<Real>* probe = nullptr) const;
  // One row per article.
  ad::Var<Real> encode_batch(ad::Tape<Real>& tape, std::span<const NewsArticle* const> articles,
                             AttentionProbe<Real>* probe = nullptr) const;

 private:
  NewsEncoderConfig config_;
  ad::Parameter<Real>* word_;
  ad::Parameter<Real>* category_;
  ad::Parameter<Real>* entity_ = nullptr;
  ad::Parameter<Real>* query_;
  ad::Parameter<Real>* key_;
  ad::Parameter<Real>* value_;
  ad::Parameter<Real>* pool_proj_;
  ad::Parameter<Real>* pool_bias_;
  ad::Parameter<Real>* pool_query_;
  ad::Parameter<Real>* combine_w_;
  ad::Parameter<Real>* combine_b_;
};

}  // namespace awrs
