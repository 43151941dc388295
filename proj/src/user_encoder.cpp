#include "awrs/user_encoder.hpp"

#include <algorithm>

#include "awrs/error.hpp"

namespace awrs {

template <typename Real>
UserEncoder<Real>::UserEncoder(const UserEncoderConfig& config, ad::ParameterStore<Real>& store,
                               std::mt19937_64& rng)
    : config_(config) {
  const auto d = config.aug_dim;
  if (config.heads == 0 || d % config.heads != 0) {
    throw Error("augmented width (" + std::to_string(d) + ") must be divisible by user heads (" +
                std::to_string(config.heads) + ")");
  }
  const auto head_dim = d / config.heads;
  const auto window_width = (2 * config.window + 1) * d;

  q_u_ = &store.add("user.query_history", {d, d});
  q_c_ = &store.add("user.query_candidate", {d, d});
  ad::init_glorot(*q_u_, rng);
  ad::init_glorot(*q_c_, rng);
  for (std::size_t k = 0; k < config.heads; ++k) {
    w_r_.push_back(&store.add("user.head" + std::to_string(k) + ".relatedness", {d, d}));
    w_o_.push_back(&store.add("user.head" + std::to_string(k) + ".output", {d, head_dim}));
    ad::init_glorot(*w_r_.back(), rng);
    ad::init_glorot(*w_o_.back(), rng);
  }
  cnn_window_ = &store.add("user.cnn.window", {window_width, d});
  cnn_candidate_ = &store.add("user.cnn.candidate", {d, d});
  cnn_bias_ = &store.add("user.cnn.bias", {1, d});
  phi1_w_ = &store.add("user.phi1.weight", {2 * d, d});
  phi1_b_ = &store.add("user.phi1.bias", {1, d});
  phi2_hidden_w_ = &store.add("user.phi2.hidden", {2 * d, config.attention_hidden});
  phi2_hidden_b_ = &store.add("user.phi2.hidden_bias", {1, config.attention_hidden});
  phi2_out_ = &store.add("user.phi2.query", {config.attention_hidden, 1});
  phi3_w_ = &store.add("user.phi3.weight", {d, 1});
  phi3_b_ = &store.add("user.phi3.bias", {1, 1});
  for (auto* p : {cnn_window_, cnn_candidate_, phi1_w_, phi2_hidden_w_, phi2_out_, phi3_w_}) {
    ad::init_glorot(*p, rng);
  }
}

template <typename Real>
typename UserEncoder<Real>::History UserEncoder<Real>::prepare(ad::Tape<Real>& tape,
                                                               ad::Var<Real> items,
                                                               const ad::Mask& mask) const {
  const auto shape = items.shape();
  if (shape.cols != config_.aug_dim) {
    throw ShapeError("user history has width " + std::to_string(shape.cols) + ", expected " +
                     std::to_string(config_.aug_dim));
  }
  if (!mask.empty() && mask.size() != shape.rows) {
    throw ShapeError("history mask length " + std::to_string(mask.size()) + " != " +
                     std::to_string(shape.rows) + " rows");
  }
  const bool any = mask.empty() ? shape.rows > 0
                                : std::any_of(mask.begin(), mask.end(), [](auto m) { return m != 0; });
  if (!any) throw Error("user history is empty or fully masked");

  History h;
  h.mask = mask;
  h.items = items;
  if (!mask.empty() && !std::all_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) {
    // Padded slots must not leak into the CNN windows either.
    ad::Tensor<Real> keep(shape);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      if (mask[r] != 0) std::fill(keep.row(r).begin(), keep.row(r).end(), Real(1));
    }
    h.items = ad::mul(items, tape.constant(std::move(keep)));
  }

  auto queries = ad::matmul(h.items, tape.leaf(*q_u_));
  for (std::size_t k = 0; k < config_.heads; ++k) {
    auto projected = ad::matmul(queries, tape.leaf(*w_r_[k]));
    h.self_scores.push_back(ad::matmul_transposed(projected, h.items));
    h.values.push_back(ad::matmul(h.items, tape.leaf(*w_o_[k])));
  }
  h.window_proj = ad::matmul(ad::sliding_window_concat(h.items, config_.window),
                             tape.leaf(*cnn_window_));
  return h;
}

template <typename Real>
ad::Var<Real> UserEncoder<Real>::self_attention(ad::Tape<Real>& tape, const History& history,
                                                ad::Var<Real> candidate,
                                                AttentionProbe<Real>* probe) const {
  const auto rows = history.items.shape().rows;
  auto query = ad::matmul(candidate, tape.leaf(*q_c_));
  std::vector<ad::Var<Real>> heads;
  heads.reserve(config_.heads);
  for (std::size_t k = 0; k < config_.heads; ++k) {
    auto candidate_term = ad::matmul_transposed(ad::matmul(query, tape.leaf(*w_r_[k])), history.items);
    auto scores = ad::add(history.self_scores[k], ad::tile_rows(candidate_term, rows));
    auto gamma = ad::softmax_rows(scores, history.mask);
    if (probe != nullptr) probe->add("user_self_attention", gamma, history.mask);
    heads.push_back(ad::matmul(gamma, history.values[k]));
  }
  return ad::concat_cols<Real>(heads);
}

template <typename Real>
ad::Var<Real> UserEncoder<Real>::cnn(ad::Tape<Real>& tape, const History& history,
                                     ad::Var<Real> candidate) const {
  auto shift = ad::affine(candidate, tape.leaf(*cnn_candidate_), tape.leaf(*cnn_bias_));
  return ad::relu(ad::add_bias(history.window_proj, shift));
}

template <typename Real>
ad::Var<Real> UserEncoder<Real>::user_embedding(ad::Tape<Real>& tape, const History& history,
                                                ad::Var<Real> attended, ad::Var<Real> local,
                                                ad::Var<Real> candidate,
                                                AttentionProbe<Real>* probe) const {
  const auto rows = history.items.shape().rows;
  auto merged = ad::relu(ad::affine(ad::concat_cols({local, attended}), tape.leaf(*phi1_w_),
                                    tape.leaf(*phi1_b_)));
  auto hidden = ad::tanh(ad::affine(ad::concat_cols({merged, ad::tile_rows(candidate, rows)}),
                                    tape.leaf(*phi2_hidden_w_), tape.leaf(*phi2_hidden_b_)));
  auto alpha = ad::softmax_rows(ad::transpose(ad::matmul(hidden, tape.leaf(*phi2_out_))), history.mask);
  if (probe != nullptr) probe->add("user_click_attention", alpha, history.mask);
  return ad::matmul(alpha, merged);
}

template <typename Real>
typename UserEncoder<Real>::Output UserEncoder<Real>::interest(ad::Tape<Real>& tape,
                                                               ad::Var<Real> candidate,
                                                               ad::Var<Real> user,
                                                               ad::Var<Real> r_aw) const {
  Output out;
  out.user = user;
  out.preliminary = ad::matmul_transposed(candidate, user);
  out.eta = ad::sigmoid(ad::affine(user, tape.leaf(*phi3_w_), tape.leaf(*phi3_b_)));
  out.score = ad::add(ad::mul(ad::one_minus(out.eta), r_aw), ad::mul(out.eta, out.preliminary));
  return out;
}

template <typename Real>
typename UserEncoder<Real>::Output UserEncoder<Real>::score(ad::Tape<Real>& tape,
                                                            const History& history,
                                                            ad::Var<Real> candidate,
                                                            ad::Var<Real> r_aw,
                                                            AttentionProbe<Real>* probe) const {
  auto attended = self_attention(tape, history, candidate, probe);
  auto local = cnn(tape, history, candidate);
  auto user = user_embedding(tape, history, attended, local, candidate, probe);
  return interest(tape, candidate, user, r_aw);
}

template class UserEncoder<float>;
template class UserEncoder<double>;

}  // namespace awrs
