#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "awrs/autodiff.hpp"
#include "awrs/news_encoder.hpp"

namespace awrs {

struct UserEncoderConfig {
  std::size_t aug_dim = 288;  // d_news + dim_ue
  std::size_t heads = 4;
  std::size_t window = 1;     // h; the CNN sees 2h + 1 history items
  std::size_t attention_hidden = 128;
};

// Candidate-aware user encoder over engagement-augmented history items.
template <typename Real>
class UserEncoder {
 public:
  // History rows with padded slots zeroed, plus the candidate-independent pieces.
  struct History {
    ad::Var<Real> items;  // M x d_aug
    ad::Mask mask;
    std::vector<ad::Var<Real>> self_scores;  // per head, M x M
    std::vector<ad::Var<Real>> values;       // per head, M x (d_aug / heads)
    ad::Var<Real> window_proj;               // M x d_aug
  };

  struct Output {
    ad::Var<Real> score;        // Int_s, 1 x 1
    ad::Var<Real> preliminary;  // Int_s', 1 x 1
    ad::Var<Real> eta;          // 1 x 1
    ad::Var<Real> user;         // u_aw, 1 x d_aug
  };

  UserEncoder(const UserEncoderConfig& config, ad::ParameterStore<Real>& store,
              std::mt19937_64& rng);

  const UserEncoderConfig& config() const { return config_; }

  // items: M x d_aug. mask: one entry per row (empty keeps all). Throws Error when every
  // row is masked; cold users are handled by the caller.
  History prepare(ad::Tape<Real>& tape, ad::Var<Real> items, const ad::Mask& mask = {}) const;

  // M x d_aug. Head outputs concatenated.
  ad::Var<Real> self_attention(ad::Tape<Real>& tape, const History& history,
                               ad::Var<Real> candidate, AttentionProbe<Real>* probe = nullptr) const;
  // M x d_aug.
  ad::Var<Real> cnn(ad::Tape<Real>& tape, const History& history, ad::Var<Real> candidate) const;
  // 1 x d_aug.
  ad::Var<Real> user_embedding(ad::Tape<Real>& tape, const History& history, ad::Var<Real> attended,
                               ad::Var<Real> local, ad::Var<Real> candidate,
                               AttentionProbe<Real>* probe = nullptr) const;
  Output interest(ad::Tape<Real>& tape, ad::Var<Real> candidate, ad::Var<Real> user,
                  ad::Var<Real> r_aw) const;

  // All of the above for one candidate (1 x d_aug) and its r_aw (1 x 1).
  Output score(ad::Tape<Real>& tape, const History& history, ad::Var<Real> candidate,
               ad::Var<Real> r_aw, AttentionProbe<Real>* probe = nullptr) const;

  ad::Parameter<Real>& eta_weight() { return *phi3_w_; }
  ad::Parameter<Real>& eta_bias() { return *phi3_b_; }
  ad::Parameter<Real>& history_query() { return *q_u_; }
  ad::Parameter<Real>& candidate_query() { return *q_c_; }
  ad::Parameter<Real>& relatedness(std::size_t head) { return *w_r_[head]; }
  ad::Parameter<Real>& head_output(std::size_t head) { return *w_o_[head]; }

 private:
  UserEncoderConfig config_;
  ad::Parameter<Real>* q_u_;
  ad::Parameter<Real>* q_c_;
  std::vector<ad::Parameter<Real>*> w_r_;
  std::vector<ad::Parameter<Real>*> w_o_;
  ad::Parameter<Real>* cnn_window_;
  ad::Parameter<Real>* cnn_candidate_;
  ad::Parameter<Real>* cnn_bias_;
  ad::Parameter<Real>* phi1_w_;
  ad::Parameter<Real>* phi1_b_;
  ad::Parameter<Real>* phi2_hidden_w_;
  ad::Parameter<Real>* phi2_hidden_b_;
  ad::Parameter<Real>* phi2_out_;
  ad::Parameter<Real>* phi3_w_;
  ad::Parameter<Real>* phi3_b_;
};

}  // namespace awrs
