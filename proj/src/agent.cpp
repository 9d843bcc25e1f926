#include "dcnav/agent.hpp"

#include <cmath>
#include <string>

#include "dcnav/error.hpp"

namespace dcnav {

namespace {

Tensor uniform_init(std::vector<size_t> shape, double bound, uint64_t seed,
                    const std::string& name) {
  RngStream rng(derive_seed(seed, {fnv1a64("init"), fnv1a64(name)}));
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor lstm_bias(size_t hidden) {
  // Zero except the forget gate, which starts open at 1.0.
  Tensor b = Tensor::zeros({4 * hidden});
  for (size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
  return b;
}

Tensor partial_identity(size_t rows, size_t cols) {
  Tensor t = Tensor::zeros({rows, cols});
  const size_t k = std::min(rows, cols);
  for (size_t i = 0; i < k; ++i) t[i * cols + i] = 1.0;
  return t;
}

}  // namespace

AgentModel::AgentModel(const ModelConfig& cfg, const Vocabulary& vocab,
                       size_t feature_dim, uint64_t seed)
    : cfg_(cfg), vocab_(&vocab), feature_dim_(feature_dim), d_word_(vocab.dim()) {
  if (cfg.hidden == 0 || cfg.bottleneck == 0 || cfg.d_att == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (cfg.n_filters < 1) throw ConfigError("n_filters must be >= 1");
  if (cfg.dropout_p < 0.0 || cfg.dropout_p >= 1.0) {
    throw ConfigError("dropout_p must be in [0, 1)");
  }
  if (feature_dim_ == 0 || d_word_ == 0) {
    throw ConfigError("feature_dim and embedding dim must be positive");
  }
  const size_t H = cfg.hidden;
  const size_t C_aug = aug_channels();
  const size_t M = cfg.n_filters;

  auto mk = [&](const std::string& name, std::vector<size_t> shape, size_t fan_in) {
    return params_.create(name,
                          uniform_init(std::move(shape),
                                       1.0 / std::sqrt(static_cast<double>(fan_in)),
                                       seed, name));
  };

  if (cfg.pretrained_embeddings) {
    embedding_ = ag::Variable::constant(vocab.embeddings);
  } else {
    embedding_ = params_.create(
        "encoder.embedding",
        uniform_init({vocab.size(), d_word_}, 0.1, seed, "encoder.embedding"));
  }
  enc_w_ih_ = mk("encoder.lstm.w_ih", {4 * H, d_word_}, d_word_);
  enc_w_hh_ = mk("encoder.lstm.w_hh", {4 * H, H}, H);
  enc_b_ = params_.create("encoder.lstm.b", lstm_bias(H));
  // The bottleneck starts as a feature-preserving slice so the response maps
  // carry raw visual structure from step one; training reshapes it from there.
  bott_w_ = params_.create("encoder.bottleneck.w",
                           partial_identity(cfg.bottleneck, feature_dim_));
  bott_b_ = params_.create("encoder.bottleneck.b", Tensor::zeros({cfg.bottleneck}));

  if (cfg.use_attention) {
    w_q_ = mk("agent.attention.w_q", {cfg.d_att, H}, H);
    b_q_ = params_.create("agent.attention.b_q", Tensor::zeros({cfg.d_att}));
    w_k_ = mk("agent.attention.w_k", {cfg.d_att, H}, H);
    b_k_ = params_.create("agent.attention.b_k", Tensor::zeros({cfg.d_att}));
  }
  if (cfg.dynamic_filters) {
    w_f_ = mk("agent.filters.w_f", {M * C_aug, H}, H);
    b_f_ = params_.create("agent.filters.b_f", Tensor::zeros({M * C_aug}));
  } else {
    static_filters_ = mk("agent.filters.static", {M, C_aug}, C_aug);
  }
  const size_t policy_in = static_cast<size_t>(kGridCells) * M + kNumActions;
  pol_w_ih_ = mk("agent.policy.w_ih", {4 * H, policy_in}, policy_in);
  pol_w_hh_ = mk("agent.policy.w_hh", {4 * H, H}, H);
  pol_b_ = params_.create("agent.policy.b", lstm_bias(H));
  head_w_ = mk("agent.head.w", {static_cast<size_t>(kNumActions), H}, H);
  head_b_ = params_.create("agent.head.b", Tensor::zeros({static_cast<size_t>(kNumActions)}));
}

size_t AgentModel::expected_param_count() const {
  const size_t H = cfg_.hidden;
  const size_t C_aug = aug_channels();
  const size_t M = cfg_.n_filters;
  size_t n = 0;
  if (!cfg_.pretrained_embeddings) n += vocab_->size() * d_word_;
  n += 4 * H * d_word_ + 4 * H * H + 4 * H;               // encoder LSTM
  n += cfg_.bottleneck * feature_dim_ + cfg_.bottleneck;  // bottleneck
  if (cfg_.use_attention) n += 2 * (cfg_.d_att * H + cfg_.d_att);
  if (cfg_.dynamic_filters) n += M * C_aug * H + M * C_aug;
  else n += M * C_aug;
  const size_t policy_in = static_cast<size_t>(kGridCells) * M + kNumActions;
  n += 4 * H * policy_in + 4 * H * H + 4 * H;             // policy LSTM
  n += static_cast<size_t>(kNumActions) * H + kNumActions;  // action head
  return n;
}

EpisodeContext AgentModel::make_context(const std::string& instruction) const {
  EpisodeContext ctx;
  ctx.enc = encode_instruction(instruction, *vocab_, embedding_, enc_w_ih_,
                               enc_w_hh_, enc_b_);
  if (cfg_.use_attention) {
    ctx.keys = ag::relu(ag::linear_rows(ctx.enc.X, w_k_, b_k_));
  }
  return ctx;
}

DecoderState AgentModel::initial_state() const {
  DecoderState s;
  s.h = ag::Variable::constant(Tensor::zeros({cfg_.hidden}));
  s.c = ag::Variable::constant(Tensor::zeros({cfg_.hidden}));
  s.a_prev = Tensor::zeros({static_cast<size_t>(kNumActions)});
  s.step = 0;
  return s;
}

ag::Variable AgentModel::observe(const NavGraph& g, const AgentPose& pose) const {
  validate_pose(g, pose);
  return build_feature_grid(g.node(pose.node), feature_dim_, pose, bott_w_,
                            bott_b_, cfg_.absolute_elevation_coords);
}

std::pair<ag::Variable, ag::Variable> AgentModel::attend(
    const EpisodeContext& ctx, const ag::Variable& h_prev) const {
  if (!cfg_.use_attention) {
    size_t n = ctx.enc.X.value().dim(0);
    return {ag::row(ctx.enc.X, n - 1), ag::Variable()};
  }
  ag::Variable q = ag::relu(ag::add(ag::matvec(w_q_, h_prev), b_q_));
  ag::Variable scores = ag::matvec(ctx.keys, q);  // [N]: each key row . q
  ag::Variable alpha =
      ag::softmax(ag::scale(scores, 1.0 / std::sqrt(static_cast<double>(cfg_.d_att))));
  return {ag::matvec_t(ctx.enc.X, alpha), alpha};
}

ag::Variable AgentModel::make_filters(const ag::Variable& s_t, bool train,
                                      RngStream& rng) const {
  if (!cfg_.dynamic_filters) {
    return ag::l2_normalize_rows(static_filters_);
  }
  ag::Variable s = s_t;
  if (train && cfg_.dropout_p > 0.0) s = ag::dropout(s, cfg_.dropout_p, rng);
  ag::Variable pre = ag::tanh_op(ag::add(ag::matvec(w_f_, s), b_f_));
  ag::Variable bank = ag::reshape(pre, {cfg_.n_filters, aug_channels()});
  try {
    return ag::l2_normalize_rows(bank);
  } catch (const NormError& e) {
    throw NormError(std::string("degenerate dynamic filter row: ") + e.what());
  }
}

ag::Variable AgentModel::respond(const ag::Variable& filters,
                                 const ag::Variable& grid) const {
  return ag::row_dot_products(filters, grid,
                              1.0 / std::sqrt(static_cast<double>(aug_channels())));
}

std::pair<ag::Variable, DecoderState> AgentModel::policy_step(
    const DecoderState& state, const ag::Variable& response, bool train,
    RngStream& rng) const {
  ag::Variable flat = ag::reshape(
      response, {static_cast<size_t>(kGridCells) * cfg_.n_filters});
  ag::Variable input = ag::concat({flat, ag::Variable::constant(state.a_prev)});
  auto [h, c] = ag::lstm_cell(input, state.h, state.c, pol_w_ih_, pol_w_hh_, pol_b_);
  ag::Variable h_used = h;
  if (train && cfg_.dropout_p > 0.0) h_used = ag::dropout(h, cfg_.dropout_p, rng);
  ag::Variable p = ag::softmax(ag::add(ag::matvec(head_w_, h_used), head_b_));
  DecoderState next;
  next.h = h;
  next.c = c;
  next.a_prev = state.a_prev;  // caller records the executed action
  next.step = state.step + 1;
  return {p, next};
}

Tensor AgentModel::one_hot(Action a) {
  Tensor t = Tensor::zeros({static_cast<size_t>(kNumActions)});
  t[static_cast<size_t>(a)] = 1.0;
  return t;
}

Action AgentModel::select_action(const Tensor& p, bool greedy, RngStream& rng) {
  if (p.rank() != 1 || p.dim(0) != static_cast<size_t>(kNumActions)) {
    throw ShapeError("action distribution must have " +
                     std::to_string(kNumActions) + " entries, got " + p.shape_str());
  }
  if (greedy) {
    size_t best = 0;
    for (size_t i = 1; i < p.numel(); ++i) {
      if (p[i] > p[best]) best = i;
    }
    return static_cast<Action>(best);
  }
  std::vector<double> probs(p.numel());
  for (size_t i = 0; i < p.numel(); ++i) probs[i] = p[i];
  return static_cast<Action>(rng.pick_index(probs));
}

}  // namespace dcnav
