#include "dcnav/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dcnav/checkpoint.hpp"
#include "dcnav/error.hpp"
#include "dcnav/optim.hpp"
#include "dcnav/util.hpp"

namespace dcnav {

namespace {

// Teacher label for an arbitrary live pose. On the ground-truth path the
// oracle is queried directly; off it, the label steers toward the next
// unreached path node via the first hop of a shortest route.
Action teacher_label(const NavGraph& g, const std::vector<size_t>& path,
                     const AgentPose& pose, size_t progress) {
  if (pose.node == path[progress]) return oracle_action(g, pose, path, progress);
  size_t target = path[std::min(progress + 1, path.size() - 1)];
  if (pose.node == target) {
    std::vector<size_t> mini{pose.node};
    return oracle_action(g, pose, mini, 0);
  }
  std::vector<size_t> mini{pose.node, g.next_hop(pose.node, target)};
  return oracle_action(g, pose, mini, 0);
}

void validate_train_config(const TrainConfig& cfg) {
  std::vector<std::string> problems;
  if (!(cfg.lr > 0.0)) problems.push_back("lr must be positive");
  if (cfg.batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (cfg.max_epochs < 1) problems.push_back("max_epochs must be >= 1");
  if (cfg.max_episode_steps < 1) problems.push_back("max_episode_steps must be >= 1");
  if (cfg.patience < 1) problems.push_back("patience must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

}  // namespace

RolloutResult rollout_train(const AgentModel& model, const NavGraph& g,
                            const Episode& ep, const TrainConfig& cfg,
                            RngStream& rng) {
  EpisodeContext ctx = model.make_context(ep.instruction);
  DecoderState state = model.initial_state();
  AgentPose pose{ep.path.front(), ep.start_heading_bin, 0};
  size_t progress = 0;

  RolloutResult out;
  out.record.episode_id = ep.id;
  out.record.poses.push_back(pose);

  ag::Variable loss;
  bool done = false;
  while (!done) {
    if (out.record.actions.size() >= cfg.max_episode_steps) {
      out.record.truncated = true;
      break;
    }
    ag::Variable grid = model.observe(g, pose);
    auto [s_t, alpha] = model.attend(ctx, state.h);
    ag::Variable filters = model.make_filters(s_t, /*train=*/true, rng);
    ag::Variable response = model.respond(filters, grid);
    auto [p, next_state] = model.policy_step(state, response, /*train=*/true, rng);
    state = next_state;

    Action label = teacher_label(g, ep.path, pose, progress);
    ag::Variable ce = ag::cross_entropy(p, static_cast<size_t>(label));
    loss = loss.defined() ? ag::add(loss, ce) : ce;

    Action executed =
        cfg.force_oracle ? label
                         : AgentModel::select_action(p.value(), /*greedy=*/false, rng);
    StepOutcome outcome = apply_action(g, pose, executed);
    state.a_prev = AgentModel::one_hot(executed);
    out.record.actions.push_back(executed);
    if (outcome.moved) {
      out.record.traveled_m += g.euclidean(pose.node, outcome.pose.node);
    }
    pose = outcome.pose;
    out.record.poses.push_back(pose);
    if (outcome.moved && progress + 1 < ep.path.size() &&
        pose.node == ep.path[progress + 1]) {
      ++progress;
    }
    done = outcome.done;
  }
  out.loss = loss;
  out.loss_value = loss.value()[0];
  if (!std::isfinite(out.loss_value)) {
    throw NumericError("episode " + ep.id + ": non-finite rollout loss after " +
                       std::to_string(out.record.actions.size()) + " steps");
  }
  return out;
}

EpisodeRecord rollout_policy(const AgentModel& model, const NavGraph& g,
                             const Episode& ep, size_t max_steps) {
  EpisodeContext ctx = model.make_context(ep.instruction);
  DecoderState state = model.initial_state();
  AgentPose pose{ep.path.front(), ep.start_heading_bin, 0};
  RngStream unused(0);  // eval mode draws nothing

  EpisodeRecord record;
  record.episode_id = ep.id;
  record.poses.push_back(pose);
  bool done = false;
  while (!done) {
    if (record.actions.size() >= max_steps) {
      record.truncated = true;
      break;
    }
    ag::Variable grid = model.observe(g, pose);
    auto [s_t, alpha] = model.attend(ctx, state.h);
    ag::Variable filters = model.make_filters(s_t, /*train=*/false, unused);
    ag::Variable response = model.respond(filters, grid);
    auto [p, next_state] = model.policy_step(state, response, /*train=*/false, unused);
    state = next_state;
    Action executed = AgentModel::select_action(p.value(), /*greedy=*/true, unused);
    StepOutcome outcome = apply_action(g, pose, executed);
    state.a_prev = AgentModel::one_hot(executed);
    record.actions.push_back(executed);
    if (outcome.moved) {
      record.traveled_m += g.euclidean(pose.node, outcome.pose.node);
    }
    pose = outcome.pose;
    record.poses.push_back(pose);
    done = outcome.done;
  }
  return record;
}

SplitScore evaluate_split(const AgentModel& model, const NavGraph& g,
                          const std::vector<Episode>& episodes, size_t max_steps,
                          unsigned threads) {
  if (episodes.empty()) throw ConfigError("cannot evaluate an empty split");
  std::vector<EpisodeRecord> records(episodes.size());
  std::vector<size_t> goals(episodes.size());
  parallel_for(episodes.size(), threads, [&](size_t i) {
    records[i] = rollout_policy(model, g, episodes[i], max_steps);
    goals[i] = episodes[i].path.back();
  });
  return score_split(g, records, goals);
}

TrainReport train(const TrainConfig& cfg, const NavGraph& g, const Vocabulary& vocab,
                  const std::vector<Episode>& train_eps,
                  const std::vector<Episode>& val_seen,
                  const std::vector<Episode>& val_unseen, const std::string& out_dir,
                  const EpochCallback& on_epoch) {
  validate_train_config(cfg);
  if (train_eps.empty()) throw ConfigError("training split is empty");
  if (val_seen.empty()) throw ConfigError("val_seen split is empty");

  // The step budget must cover every training episode's oracle solution,
  // otherwise truncation would make some goals unreachable by construction.
  size_t longest = 0;
  for (const auto& ep : train_eps) {
    validate_episode(g, ep);
    longest = std::max(longest, run_oracle_rollout(g, ep).actions.size());
  }
  if (cfg.max_episode_steps < longest) {
    std::ostringstream os;
    os << "max_episode_steps = " << cfg.max_episode_steps
       << " is below the longest oracle rollout in the training split ("
       << longest << " steps)";
    throw ConfigError(os.str());
  }

  AgentModel model(cfg.model, vocab, g.feature_dim(), cfg.seed);
  if (model.params().total_numel() != model.expected_param_count()) {
    std::ostringstream os;
    os << "parameter count audit failed: store holds "
       << model.params().total_numel() << " values, formula gives "
       << model.expected_param_count();
    throw Error(os.str());
  }
  Adam opt(model.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  TrainReport report;
  report.config = cfg;
  report.param_count = model.params().total_numel();
  report.checkpoint_path = out_dir + "/model.ckpt";

  double best = -1.0;
  size_t best_epoch = 0;
  size_t epochs_since_best = 0;
  const size_t n = train_eps.size();

  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    RngStream order_rng(derive_seed(cfg.seed, {fnv1a64("epoch"), epoch}));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      size_t batch = std::min(cfg.batch_size, n - start);
      model.params().zero_grads();
      for (size_t j = 0; j < batch; ++j) {
        size_t di = order[start + j];
        RngStream ep_rng(derive_seed(cfg.seed, {fnv1a64("rollout"), epoch, di}));
        try {
          RolloutResult rr = rollout_train(model, g, train_eps[di], cfg, ep_rng);
          ag::backward_accumulate(ag::scale(rr.loss, 1.0 / batch));
          loss_sum += rr.loss_value;
        } catch (const NumericError& e) {
          std::ostringstream os;
          os << "training aborted at epoch " << epoch << ", batch "
             << start / cfg.batch_size << ", episode " << train_eps[di].id << ": "
             << e.what();
          throw NumericError(os.str());
        }
      }
      opt.step();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(n);
    stats.val_seen = evaluate_split(model, g, val_seen, cfg.max_episode_steps,
                                    cfg.threads);
    if (!val_unseen.empty()) {
      stats.val_unseen = evaluate_split(model, g, val_unseen,
                                        cfg.max_episode_steps, cfg.threads);
      stats.stop_metric = 0.5 * (stats.val_seen.sr + stats.val_unseen.sr);
    } else {
      stats.stop_metric = stats.val_seen.sr;
    }
    stats.improved = stats.stop_metric > best;
    if (stats.improved) {
      best = stats.stop_metric;
      best_epoch = epoch;
      epochs_since_best = 0;
      save_checkpoint(report.checkpoint_path, model.params());
    } else {
      ++epochs_since_best;
    }
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (epochs_since_best >= cfg.patience) break;
  }
  report.best_epoch = best_epoch;
  report.best_metric = best;
  return report;
}

const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> variants = {
      {"static_last_hidden", false, false, true},
      {"dynamic_last_hidden", true, false, true},
      {"dynamic_attention_scratch", true, true, false},
      {"dynamic_attention_pretrained", true, true, true},
  };
  return variants;
}

namespace {

// Shared body for ablation and sweep: one nested training run per config.
TrainReport run_variant(const TrainConfig& cfg, const NavGraph& g,
                        const Vocabulary& vocab,
                        const std::vector<Episode>& train_eps,
                        const std::vector<Episode>& val_seen,
                        const std::vector<Episode>& val_unseen,
                        const std::string& out_dir, const std::string& run_name,
                        const RunEpochCallback& on_epoch) {
  EpochCallback cb;
  if (on_epoch) {
    cb = [&on_epoch, run_name](const EpochStats& st) { on_epoch(run_name, st); };
  }
  return train(cfg, g, vocab, train_eps, val_seen, val_unseen,
               out_dir + "/" + run_name, cb);
}

// Validation scores of the epoch whose checkpoint was retained.
void best_epoch_scores(const TrainReport& rep, SplitScore& vs, SplitScore& vu) {
  for (const auto& st : rep.epochs) {
    if (st.epoch == rep.best_epoch) {
      vs = st.val_seen;
      vu = st.val_unseen;
      return;
    }
  }
  throw Error("training report has no row for its best epoch");
}

}  // namespace

AblationReport run_ablation_suite(const TrainConfig& base, const NavGraph& g,
                                  const Vocabulary& vocab,
                                  const std::vector<Episode>& train_eps,
                                  const std::vector<Episode>& val_seen,
                                  const std::vector<Episode>& val_unseen,
                                  const std::string& out_dir,
                                  const RunEpochCallback& on_epoch) {
  AblationReport report;
  for (const auto& variant : ablation_variants()) {
    TrainConfig cfg = base;
    cfg.model.dynamic_filters = variant.dynamic_filters;
    cfg.model.use_attention = variant.use_attention;
    cfg.model.pretrained_embeddings = variant.pretrained_embeddings;
    TrainReport rep = run_variant(cfg, g, vocab, train_eps, val_seen, val_unseen,
                                  out_dir, variant.name, on_epoch);
    AblationRow row;
    row.variant = variant;
    row.best_epoch = rep.best_epoch;
    row.checkpoint_path = rep.checkpoint_path;
    best_epoch_scores(rep, row.val_seen, row.val_unseen);
    report.rows.push_back(std::move(row));
  }
  return report;
}

SweepReport run_filter_sweep(const TrainConfig& base, const NavGraph& g,
                             const Vocabulary& vocab,
                             const std::vector<Episode>& train_eps,
                             const std::vector<Episode>& val_seen,
                             const std::vector<Episode>& val_unseen,
                             const std::string& out_dir,
                             std::vector<size_t> filter_counts,
                             const RunEpochCallback& on_epoch) {
  if (filter_counts.empty()) throw ConfigError("filter sweep needs at least one size");
  std::sort(filter_counts.begin(), filter_counts.end());
  SweepReport report;
  for (size_t m : filter_counts) {
    TrainConfig cfg = base;
    cfg.model.n_filters = m;
    TrainReport rep = run_variant(cfg, g, vocab, train_eps, val_seen, val_unseen,
                                  out_dir, "m" + std::to_string(m), on_epoch);
    SweepRow row;
    row.n_filters = m;
    row.param_count = rep.param_count;
    row.best_epoch = rep.best_epoch;
    row.checkpoint_path = rep.checkpoint_path;
    best_epoch_scores(rep, row.val_seen, row.val_unseen);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace dcnav
