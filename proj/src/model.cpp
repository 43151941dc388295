#include "awrs/model.hpp"

#include <algorithm>
#include <cmath>

#include "awrs/error.hpp"

namespace awrs {

ArticleFeatures article_features(const NewsArticle& article, const BucketTimeline& timeline,
                                 Timestamp t, int D) {
  const auto snapshot = timeline.snapshot_at(t);
  ArticleFeatures f;
  f.cell = article_cell(snapshot, article.news_id, D).flat;

  std::optional<Timestamp> published = article.publish_time;
  if (!published) published = timeline.first_exposure(article.news_id);
  if (published && *published < t) f.elapsed_hours = static_cast<double>(t - *published) / 3600.0;

  const auto max_clicks = snapshot.max_clicks();
  if (max_clicks > 0) {
    const auto clicks = snapshot.counts(article.news_id).clicks;
    f.clicks_norm = std::log1p(static_cast<double>(clicks)) / std::log1p(static_cast<double>(max_clicks));
  }
  return f;
}

std::optional<ScoringInput> make_input(const ImpressionRecord& record,
                                       std::span<const std::size_t> candidates,
                                       const NewsCatalog& catalog, const BucketTimeline& timeline,
                                       int D, std::size_t history_len) {
  ScoringInput input;
  for (auto i : candidates) {
    const auto* article = catalog.find(record.shown.at(i).news_id);
    if (article == nullptr) return std::nullopt;
    input.candidates.push_back(article);
    input.features.push_back(article_features(*article, timeline, record.time, D));
  }
  const auto snapshot = timeline.snapshot_at(record.time);
  for (const auto& id : record.history) {
    if (const auto* article = catalog.find(id)) input.history.push_back(article);
  }
  if (input.history.size() > history_len) {
    input.history.erase(input.history.begin(),
                        input.history.end() - static_cast<std::ptrdiff_t>(history_len));
  }
  for (const auto* article : input.history) {
    input.history_cells.push_back(article_cell(snapshot, article->news_id, D).flat);
  }
  return input;
}

void fit_to_catalog(ModelConfig& config, const NewsCatalog& catalog) {
  config.news.vocab_size = catalog.vocab.size();
  config.news.num_categories = std::max<std::size_t>(catalog.categories.size(), 1);
  config.news.num_entities = catalog.entities.size();
}

template <typename Real>
AwrsModel<Real>::AwrsModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  news_ = std::make_unique<NewsEncoder<Real>>(config.news, store_, rng);
  engagement_ = std::make_unique<EngagementTable<Real>>(store_, config.grid_d, config.ue_dim, rng);
  relevance_ = std::make_unique<RelevancePredictor<Real>>(
      RelevanceConfig{config.news.news_dim, config.ue_dim, config.time_dim}, store_, rng);
  user_ = std::make_unique<UserEncoder<Real>>(
      UserEncoderConfig{config.aug_dim(), config.user_heads, config.window,
                        config.user_attention_hidden},
      store_, rng);
}

template <typename Real>
ad::Var<Real> AwrsModel<Real>::encode(ad::Tape<Real>& tape,
                                      std::span<const NewsArticle* const> articles,
                                      AttentionProbe<Real>* probe, NewsCache* cache) const {
  std::vector<ad::Var<Real>> rows;
  rows.reserve(articles.size());
  for (const auto* a : articles) {
    if (cache != nullptr) {
      auto it = cache->find(a);
      if (it == cache->end()) it = cache->emplace(a, news_->encode_news(tape, *a, probe)).first;
      rows.push_back(it->second);
    } else {
      rows.push_back(news_->encode_news(tape, *a, probe));
    }
  }
  return ad::concat_rows<Real>(rows);
}

template <typename Real>
typename AwrsModel<Real>::Detail AwrsModel<Real>::score_detailed(ad::Tape<Real>& tape,
                                                                 const ScoringInput& input,
                                                                 AttentionProbe<Real>* probe,
                                                                 NewsCache* cache) const {
  const auto count = input.candidates.size();
  if (count == 0) throw Error("no candidates to score");
  if (input.features.size() != count || input.history_cells.size() != input.history.size()) {
    throw ShapeError("scoring input lists have inconsistent lengths");
  }

  Detail out;
  auto candidates = encode(tape, input.candidates, probe, cache);
  std::vector<std::int32_t> cells;
  ad::Tensor<Real> hours({count, 1}), clicks({count, 1});
  for (std::size_t c = 0; c < count; ++c) {
    cells.push_back(input.features[c].cell);
    hours.data[c] = static_cast<Real>(input.features[c].elapsed_hours);
    clicks.data[c] = static_cast<Real>(input.features[c].clicks_norm);
  }
  auto candidate_ue = engagement_->lookup(tape, cells);
  auto t_el = relevance_->time2vec(tape, tape.constant(std::move(hours)));
  out.relevance = relevance_->score(tape, candidates, candidate_ue, t_el,
                                    tape.constant(std::move(clicks)));

  if (input.history.empty()) {
    // Cold user: no history to attend over.
    if (config_.mode == Mode::only_avoid) {
      out.scores = tape.constant(ad::Tensor<Real>({1, count}));
    } else {
      out.scores = ad::transpose(out.relevance.r_aw);
    }
    return out;
  }

  const auto zero_ue = [&](std::size_t rows) {
    return tape.constant(ad::Tensor<Real>({rows, config_.ue_dim}));
  };
  const bool hide_ue = config_.mode == Mode::only_rel;
  auto history_news = encode(tape, input.history, probe, cache);
  auto history_ue = hide_ue ? zero_ue(input.history.size())
                            : engagement_->lookup(tape, input.history_cells);
  auto history = user_->prepare(tape, ad::concat_cols({history_news, history_ue}));
  auto augmented = ad::concat_cols({candidates, hide_ue ? zero_ue(count) : candidate_ue});

  std::vector<ad::Var<Real>> scores;
  for (std::size_t c = 0; c < count; ++c) {
    auto part = user_->score(tape, history, ad::slice_rows(augmented, c, c + 1),
                             ad::slice_rows(out.relevance.r_aw, c, c + 1), probe);
    scores.push_back(config_.mode == Mode::only_avoid ? part.preliminary : part.score);
    out.user.push_back(part);
  }
  out.scores = ad::concat_cols<Real>(scores);
  return out;
}

template <typename Real>
ad::Var<Real> AwrsModel<Real>::score(ad::Tape<Real>& tape, const ScoringInput& input,
                                     AttentionProbe<Real>* probe, NewsCache* cache) const {
  return score_detailed(tape, input, probe, cache).scores;
}

template <typename Real>
std::vector<double> AwrsModel<Real>::predict(const ScoringInput& input) const {
  ad::Tape<Real> tape;
  const auto& v = score(tape, input).value();
  return {v.data.begin(), v.data.end()};
}

template <typename Real>
void AwrsModel<Real>::load_word_embeddings(const EmbeddingMatrix& matrix) {
  auto& table = news_->word_embeddings().value();
  if (matrix.rows != table.rows() || matrix.cols != table.cols()) {
    throw ShapeError("word vectors are " + std::to_string(matrix.rows) + "x" +
                     std::to_string(matrix.cols) + ", embedding table is " +
                     ad::to_string(table.shape));
  }
  for (std::size_t i = 0; i < matrix.data.size(); ++i) table.data[i] = static_cast<Real>(matrix.data[i]);
}

template class AwrsModel<float>;
template class AwrsModel<double>;

}  // namespace awrs
