#pragma once

#include <cstddef>
#include <random>

#include "awrs/autodiff.hpp"

namespace awrs {

struct RelevanceConfig {
  std::size_t news_dim = 256;
  std::size_t ue_dim = 32;
  std::size_t time_dim = 16;
};

// Avoidance-aware relevance r_aw of a candidate given its news embedding, engagement
// embedding, elapsed-time encoding and normalized click count. Every input is batched
// over rows, one row per candidate.
template <typename Real>
class RelevancePredictor {
 public:
  struct Output {
    ad::Var<Real> r_aw;     // C x 1, in (0, 1)
    ad::Var<Real> r_hat;    // C x 1
    ad::Var<Real> gate;     // C x 1, W
    ad::Var<Real> content;  // C x 1, r_ic
    ad::Var<Real> context;  // C x 1, r_tue
  };

  RelevancePredictor(const RelevanceConfig& config, ad::ParameterStore<Real>& store,
                     std::mt19937_64& rng);

  const RelevanceConfig& config() const { return config_; }

  // Elapsed hours (C x 1) -> C x time_dim; column 0 linear, the rest sinusoidal.
  ad::Var<Real> time2vec(ad::Tape<Real>& tape, ad::Var<Real> hours) const;

  Output score(ad::Tape<Real>& tape, ad::Var<Real> news, ad::Var<Real> ue, ad::Var<Real> t_el,
               ad::Var<Real> clicks_norm) const;

  ad::Parameter<Real>& gate_weight() { return *psi1_w_; }
  ad::Parameter<Real>& gate_bias() { return *psi1_b_; }
  ad::Parameter<Real>& click_weight() { return *w_ctr_; }
  ad::Parameter<Real>& score_weight() { return *w_r_; }
  ad::Parameter<Real>& frequencies() { return *t2v_w_; }
  ad::Parameter<Real>& phases() { return *t2v_b_; }

 private:
  RelevanceConfig config_;
  ad::Parameter<Real>* t2v_w_;
  ad::Parameter<Real>* t2v_b_;
  ad::Parameter<Real>* psi1_w_;
  ad::Parameter<Real>* psi1_b_;
  ad::Parameter<Real>* psi2_w_;
  ad::Parameter<Real>* psi2_b_;
  ad::Parameter<Real>* psi3_w_;
  ad::Parameter<Real>* psi3_b_;
  ad::Parameter<Real>* w_ctr_;
  ad::Parameter<Real>* w_r_;
};

}  // namespace awrs
