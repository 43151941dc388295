#include "awrs/news_encoder.hpp"

#include <cmath>

#include "awrs/error.hpp"

namespace awrs {

template <typename Real>
NewsEncoder<Real>::NewsEncoder(const NewsEncoderConfig& config, ad::ParameterStore<Real>& store,
                               std::mt19937_64& rng)
    : config_(config) {
  if (config.heads == 0 || config.news_dim % config.heads != 0) {
    throw Error("news_dim (" + std::to_string(config.news_dim) + ") must be divisible by heads (" +
                std::to_string(config.heads) + ")");
  }
  if (config.vocab_size < 2) throw Error("vocabulary must hold at least PAD and UNK");
  const auto d = config.news_dim;

  word_ = &store.add("news.word_embedding", {config.vocab_size, config.word_dim}, true);
  ad::init_uniform(*word_, Real(0.1), rng);
  auto pad = word_->value().row(Vocabulary::kPad);
  std::fill(pad.begin(), pad.end(), Real(0));
  word_->set_trainable(config.train_word_embeddings);

  category_ = &store.add("news.category_embedding",
                         {std::max<std::size_t>(config.num_categories, 1), config.category_dim}, true);
  ad::init_uniform(*category_, Real(0.1), rng);
  if (config.use_entities && config.num_entities > 0) {
    entity_ = &store.add("news.entity_embedding", {config.num_entities, config.entity_dim}, true);
    ad::init_uniform(*entity_, Real(0.1), rng);
  }

  query_ = &store.add("news.title.query", {config.word_dim, d});
  key_ = &store.add("news.title.key", {config.word_dim, d});
  value_ = &store.add("news.title.value", {config.word_dim, d});
  pool_proj_ = &store.add("news.pool.projection", {d, config.attention_hidden});
  pool_bias_ = &store.add("news.pool.bias", {1, config.attention_hidden});
  pool_query_ = &store.add("news.pool.query", {config.attention_hidden, 1});
  combine_w_ = &store.add("news.combine.weight", {d + config.category_dim + config.entity_dim, d});
  combine_b_ = &store.add("news.combine.bias", {1, d});
  for (auto* p : {query_, key_, value_, pool_proj_, pool_query_, combine_w_}) ad::init_glorot(*p, rng);
}

template <typename Real>
ad::Var<Real> NewsEncoder<Real>::encode_title(ad::Tape<Real>& tape,
                                              std::span<const std::int32_t> tokens,
                                              AttentionProbe<Real>* probe) const {
  const auto d = config_.news_dim;
  // Titles are right-padded; positions after the last real token never matter.
  std::size_t length = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] != Vocabulary::kPad) length = i + 1;
  }
  if (length == 0) return tape.constant(ad::Tensor<Real>({1, d}));

  const auto used = tokens.first(length);
  ad::Mask mask(length);
  for (std::size_t i = 0; i < length; ++i) mask[i] = used[i] != Vocabulary::kPad ? 1 : 0;

  auto x = ad::embedding_lookup(tape, *word_, used);
  auto q = ad::matmul(x, tape.leaf(*query_));
  auto k = ad::matmul(x, tape.leaf(*key_));
  auto v = ad::matmul(x, tape.leaf(*value_));

  const std::size_t head_dim = d / config_.heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(head_dim));
  std::vector<ad::Var<Real>> heads;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const auto b = h * head_dim, e = b + head_dim;
    auto scores = ad::scale(ad::matmul_transposed(ad::slice_cols(q, b, e), ad::slice_cols(k, b, e)), scale);
    auto weights = ad::softmax_rows(scores, mask);
    if (probe != nullptr) probe->add("title_self_attention", weights, mask);
    heads.push_back(ad::matmul(weights, ad::slice_cols(v, b, e)));
  }
  auto hidden = ad::concat_cols<Real>(heads);

  auto proj = ad::tanh(ad::affine(hidden, tape.leaf(*pool_proj_), tape.leaf(*pool_bias_)));
  auto pool_scores = ad::transpose(ad::matmul(proj, tape.leaf(*pool_query_)));
  auto pool_weights = ad::softmax_rows(pool_scores, mask);
  if (probe != nullptr) probe->add("title_pooling", pool_weights, mask);
  return ad::matmul(pool_weights, hidden);
}

template <typename Real>
ad::Var<Real> NewsEncoder<Real>::encode_news(ad::Tape<Real>& tape, const NewsArticle& article,
                                             AttentionProbe<Real>* probe) const {
  if (article.category_id < 0 ||
      static_cast<std::size_t>(article.category_id) >= category_->shape().rows) {
    throw Error("unknown category id " + std::to_string(article.category_id) + " for " +
                article.news_id);
  }
  auto title = encode_title(tape, article.title_tokens, probe);
  const std::int32_t cat[] = {article.category_id};
  auto category = ad::embedding_lookup(tape, *category_, std::span<const std::int32_t>(cat));

  ad::Var<Real> entities;
  if (entity_ != nullptr && !article.entity_ids.empty()) {
    const auto n = article.entity_ids.size();
    auto rows = ad::embedding_lookup(tape, *entity_, std::span<const std::int32_t>(article.entity_ids));
    ad::Tensor<Real> mean_weights({1, n}, Real(1) / static_cast<Real>(n));
    entities = ad::matmul(tape.constant(std::move(mean_weights)), rows);
  } else {
    entities = tape.constant(ad::Tensor<Real>({1, config_.entity_dim}));
  }
  return ad::affine(ad::concat_cols({title, category, entities}), tape.leaf(*combine_w_),
                    tape.leaf(*combine_b_));
}

template <typename Real>
ad::Var<Real> NewsEncoder<Real>::encode_batch(ad::Tape<Real>& tape,
                                              std::span<const NewsArticle* const> articles,
                                              AttentionProbe<Real>* probe) const {
  std::vector<ad::Var<Real>> rows;
  rows.reserve(articles.size());
  for (const auto* a : articles) rows.push_back(encode_news(tape, *a, probe));
  return ad::concat_rows<Real>(rows);
}

template class NewsEncoder<float>;
template class NewsEncoder<double>;

}  // namespace awrs
