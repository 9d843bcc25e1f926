#pragma once

#include <string>
#include <utility>

#include "dcnav/autodiff.hpp"
#include "dcnav/encoders.hpp"
#include "dcnav/optim.hpp"
#include "dcnav/rng.hpp"
#include "dcnav/sim_env.hpp"

namespace dcnav {

// Architecture switches. The three boolean flags are the ablation axes:
// language-generated vs. learned-constant filters, attention vs. last hidden
// state as the instruction vector, pretrained vs. trainable word embeddings.
struct ModelConfig {
  size_t hidden = 512;      // LSTM hidden size (instruction encoder and policy)
  size_t bottleneck = 512;  // visual channels per grid cell before coords
  size_t d_att = 128;       // attention projection width for q and K
  size_t n_filters = 4;     // M
  bool dynamic_filters = true;
  bool use_attention = true;
  bool pretrained_embeddings = true;
  bool absolute_elevation_coords = false;
  double dropout_p = 0.5;
};

// Per-episode recurrent state. a_prev is the one-hot of the last executed
// action; all-zeros at t=0, when no previous action exists.
struct DecoderState {
  ag::Variable h;
  ag::Variable c;
  Tensor a_prev;
  size_t step = 0;
};

// Instruction-side tensors computed once per episode.
struct EpisodeContext {
  InstructionEncoding enc;
  ag::Variable keys;  // [N, d_att], defined only when attention is enabled
};

class AgentModel {
 public:
  // Parameter initialization is fully determined by (seed, names, shapes).
  AgentModel(const ModelConfig& cfg, const Vocabulary& vocab,
             size_t feature_dim, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  size_t feature_dim() const { return feature_dim_; }
  size_t aug_channels() const { return cfg_.bottleneck + 3; }  // C' = C + 3

  // Analytic tensor-count formula over the configured dimensions; must match
  // params().total_numel() exactly (audited by the filter sweep).
  size_t expected_param_count() const;

  EpisodeContext make_context(const std::string& instruction) const;
  DecoderState initial_state() const;

  // Panoramic grid for the pose, bottlenecked and coordinate-augmented.
  ag::Variable observe(const NavGraph& g, const AgentPose& pose) const;

  // (s_t, alpha): attended instruction vector and attention weights. Without
  // attention, s_t is the encoder's last hidden state and alpha is undefined.
  std::pair<ag::Variable, ag::Variable> attend(const EpisodeContext& ctx,
                                               const ag::Variable& h_prev) const;

  // Filter bank [M, C'] with unit-norm rows. Dynamic mode generates it from
  // s_t (with dropout on s_t in train mode); static mode normalizes a learned
  // constant bank and ignores s_t.
  ag::Variable make_filters(const ag::Variable& s_t, bool train,
                            RngStream& rng) const;

  // Response map [M, 36]: every filter dotted with every grid cell, / sqrt(C').
  ag::Variable respond(const ag::Variable& filters, const ag::Variable& grid) const;

  // One policy-LSTM step on [flattened response, a_prev]; returns the action
  // distribution p_t [6] and the advanced state (a_prev left to the caller).
  std::pair<ag::Variable, DecoderState> policy_step(const DecoderState& state,
                                                    const ag::Variable& response,
                                                    bool train, RngStream& rng) const;

  static Tensor one_hot(Action a);
  // greedy: lowest-index argmax on exact ties; otherwise multinomial sample.
  static Action select_action(const Tensor& p, bool greedy, RngStream& rng);

 private:
  ModelConfig cfg_;
  const Vocabulary* vocab_;
  size_t feature_dim_;
  size_t d_word_;
  ParamStore params_;
  ag::Variable embedding_;  // constant (pretrained) or the trainable parameter
  ag::Variable enc_w_ih_, enc_w_hh_, enc_b_;
  ag::Variable bott_w_, bott_b_;
  ag::Variable w_q_, b_q_, w_k_, b_k_;
  ag::Variable w_f_, b_f_, static_filters_;
  ag::Variable pol_w_ih_, pol_w_hh_, pol_b_;
  ag::Variable head_w_, head_b_;
};

}  // namespace dcnav
