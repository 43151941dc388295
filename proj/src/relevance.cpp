#include "awrs/relevance.hpp"

#include "awrs/error.hpp"

namespace awrs {

template <typename Real>
RelevancePredictor<Real>::RelevancePredictor(const RelevanceConfig& config,
                                             ad::ParameterStore<Real>& store,
                                             std::mt19937_64& rng)
    : config_(config) {
  if (config.time_dim < 1) throw Error("time_dim must be >= 1");
  const auto d_n = config.news_dim, d_u = config.ue_dim, d_t = config.time_dim;
  t2v_w_ = &store.add("relevance.time2vec.frequency", {1, d_t});
  t2v_b_ = &store.add("relevance.time2vec.phase", {1, d_t});
  ad::init_uniform(*t2v_w_, Real(0.1), rng);
  ad::init_uniform(*t2v_b_, Real(0.1), rng);

  psi1_w_ = &store.add("relevance.psi1.weight", {d_n + d_u + d_t, 1});
  psi1_b_ = &store.add("relevance.psi1.bias", {1, 1});
  psi2_w_ = &store.add("relevance.psi2.weight", {d_n, 1});
  psi2_b_ = &store.add("relevance.psi2.bias", {1, 1});
  psi3_w_ = &store.add("relevance.psi3.weight", {d_u + d_t, 1});
  psi3_b_ = &store.add("relevance.psi3.bias", {1, 1});
  for (auto* p : {psi1_w_, psi2_w_, psi3_w_}) ad::init_glorot(*p, rng);

  w_ctr_ = &store.add("relevance.w_ctr", {1, 1});
  w_r_ = &store.add("relevance.w_r", {1, 1});
  w_ctr_->value().data[0] = Real(1);
  w_r_->value().data[0] = Real(1);
}

template <typename Real>
ad::Var<Real> RelevancePredictor<Real>::time2vec(ad::Tape<Real>& tape, ad::Var<Real> hours) const {
  auto z = ad::add_bias(ad::matmul(hours, tape.leaf(*t2v_w_)), tape.leaf(*t2v_b_));
  const auto d_t = config_.time_dim;
  if (d_t == 1) return z;
  return ad::concat_cols({ad::slice_cols(z, 0, 1), ad::sin(ad::slice_cols(z, 1, d_t))});
}

template <typename Real>
typename RelevancePredictor<Real>::Output RelevancePredictor<Real>::score(
    ad::Tape<Real>& tape, ad::Var<Real> news, ad::Var<Real> ue, ad::Var<Real> t_el,
    ad::Var<Real> clicks_norm) const {
  Output out;
  out.gate = ad::sigmoid(ad::affine(ad::concat_cols({news, ue, t_el}), tape.leaf(*psi1_w_),
                                    tape.leaf(*psi1_b_)));
  out.content = ad::affine(news, tape.leaf(*psi2_w_), tape.leaf(*psi2_b_));
  out.context = ad::affine(ad::concat_cols({ue, t_el}), tape.leaf(*psi3_w_), tape.leaf(*psi3_b_));
  out.r_hat = ad::add(ad::mul(out.gate, out.content), ad::mul(ad::one_minus(out.gate), out.context));
  out.r_aw = ad::sigmoid(ad::add(ad::matmul(clicks_norm, tape.leaf(*w_ctr_)),
                                 ad::matmul(out.r_hat, tape.leaf(*w_r_))));
  return out;
}

template class RelevancePredictor<float>;
template class RelevancePredictor<double>;

}  // namespace awrs
