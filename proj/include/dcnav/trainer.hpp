#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dcnav/agent.hpp"
#include "dcnav/metrics.hpp"
#include "dcnav/sim_env.hpp"

namespace dcnav {

struct TrainConfig {
  double lr = 1e-3;
  size_t batch_size = 128;
  size_t max_epochs = 50;
  size_t max_episode_steps = 80;
  size_t patience = 10;
  uint64_t seed = 7;
  unsigned threads = 1;
  // Debug mode: execute the oracle label instead of the sampled action.
  // Supervision becomes pure teacher forcing and rollouts follow the path.
  bool force_oracle = false;
  ModelConfig model;
};

struct EpochStats {
  size_t epoch = 0;  // 1-based, contiguous
  double mean_loss = 0.0;
  SplitScore val_seen;
  SplitScore val_unseen;   // n == 0 when the split is absent
  double stop_metric = 0.0;  // mean success rate over available val splits
  bool improved = false;
};

struct TrainReport {
  TrainConfig config;
  std::vector<EpochStats> epochs;
  size_t best_epoch = 0;
  double best_metric = 0.0;
  std::string checkpoint_path;
  size_t param_count = 0;
};

struct RolloutResult {
  ag::Variable loss;  // scalar graph node: sum of per-step cross-entropies
  double loss_value = 0.0;
  EpisodeRecord record;
};

// One training rollout: actions sampled from the policy (or oracle-forced),
// per-step labels from the oracle — re-derived from the live pose toward the
// next unreached path node whenever the agent leaves the ground-truth path.
RolloutResult rollout_train(const AgentModel& model, const NavGraph& g,
                            const Episode& ep, const TrainConfig& cfg,
                            RngStream& rng);

// Greedy rollout in eval mode (no dropout, no sampling); deterministic.
EpisodeRecord rollout_policy(const AgentModel& model, const NavGraph& g,
                             const Episode& ep, size_t max_steps);

SplitScore evaluate_split(const AgentModel& model, const NavGraph& g,
                          const std::vector<Episode>& episodes, size_t max_steps,
                          unsigned threads);

using EpochCallback = std::function<void(const EpochStats&)>;

// Minibatch training with Adam, per-epoch greedy validation, early stopping
// on the mean validation success rate, best-epoch checkpointing into
// out_dir/model.ckpt. val_unseen may be empty; the other splits may not.
TrainReport train(const TrainConfig& cfg, const NavGraph& g, const Vocabulary& vocab,
                  const std::vector<Episode>& train_eps,
                  const std::vector<Episode>& val_seen,
                  const std::vector<Episode>& val_unseen, const std::string& out_dir,
                  const EpochCallback& on_epoch = nullptr);

struct AblationVariant {
  std::string name;
  bool dynamic_filters;
  bool use_attention;
  bool pretrained_embeddings;
};

// The four studied variants, in report order.
const std::vector<AblationVariant>& ablation_variants();

struct AblationRow {
  AblationVariant variant;
  SplitScore val_seen;
  SplitScore val_unseen;
  size_t best_epoch = 0;
  std::string checkpoint_path;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

using RunEpochCallback =
    std::function<void(const std::string& run_name, const EpochStats&)>;

// Trains every ablation variant with the shared base config and seed; each
// row reports the best epoch's validation scores.
AblationReport run_ablation_suite(const TrainConfig& base, const NavGraph& g,
                                  const Vocabulary& vocab,
                                  const std::vector<Episode>& train_eps,
                                  const std::vector<Episode>& val_seen,
                                  const std::vector<Episode>& val_unseen,
                                  const std::string& out_dir,
                                  const RunEpochCallback& on_epoch = nullptr);

struct SweepRow {
  size_t n_filters = 0;
  size_t param_count = 0;
  SplitScore val_seen;
  SplitScore val_unseen;
  size_t best_epoch = 0;
  std::string checkpoint_path;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // ascending filter count
};

// One full training run per filter-bank size, shared seed and data.
SweepReport run_filter_sweep(const TrainConfig& base, const NavGraph& g,
                             const Vocabulary& vocab,
                             const std::vector<Episode>& train_eps,
                             const std::vector<Episode>& val_seen,
                             const std::vector<Episode>& val_unseen,
                             const std::string& out_dir,
                             std::vector<size_t> filter_counts = {1, 2, 4, 8, 16},
                             const RunEpochCallback& on_epoch = nullptr);

}  // namespace dcnav
