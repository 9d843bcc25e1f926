#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "dcnav/agent.hpp"
#include "dcnav/checkpoint.hpp"
#include "dcnav/encoders.hpp"
#include "dcnav/error.hpp"
#include "dcnav/metrics.hpp"
#include "dcnav/sim_env.hpp"
#include "dcnav/trainer.hpp"
#include "dcnav/util.hpp"
#include "dcnav/world_gen.hpp"

using namespace dcnav;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

WorldSpec trainer_spec() {
  WorldSpec s;
  s.seed = 11;
  s.rooms_x = 2;
  s.rooms_y = 1;
  s.room_size = 6.0;
  s.n_object_tags = 4;
  s.feature_dim = 8;
  s.episodes = {6, 2, 0};
  return s;
}

// A generated two-room world written to disk and loaded back the way the
// command-line driver does it, so training sees file-backed vocab + splits.
struct TrainFixture {
  TempDir tmp{"trainer"};
  GeneratedWorld w = generate_world(trainer_spec());
  Vocabulary vocab;

  TrainFixture() {
    write_world_files(w, tmp.path.string());
    atomic_write_file(tmp.file("stop.txt"), "the\na\nto\nand\nof\n");
    vocab = Vocabulary::load(tmp.file("embeddings.txt"), tmp.file("stop.txt"));
  }
};

ModelConfig small_model() {
  ModelConfig m;
  m.hidden = 8;
  m.bottleneck = 4;
  m.d_att = 4;
  m.n_filters = 1;
  m.dropout_p = 0.1;
  return m;
}

TrainConfig base_config() {
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch_size = 3;
  cfg.max_epochs = 2;
  cfg.max_episode_steps = 48;
  cfg.patience = 5;
  cfg.seed = 13;
  cfg.threads = 1;
  cfg.model = small_model();
  return cfg;
}

size_t longest_oracle(const NavGraph& g, const std::vector<Episode>& eps) {
  size_t longest = 0;
  for (const auto& ep : eps) {
    longest = std::max(longest, run_oracle_rollout(g, ep).actions.size());
  }
  return longest;
}

// One-node world: the only legal move is to end the episode.
NavGraph solo_graph(size_t feat) {
  NavGraph g;
  std::vector<float> features(static_cast<size_t>(kGridCells) * feat, 0.25f);
  g.add_node({"solo", 0.0, 0.0, 0.0, features});
  g.finalize();
  return g;
}

Vocabulary inline_vocab() {
  Vocabulary v;
  v.index = {{"stay", 0}, {"here", 1}};
  v.embeddings = Tensor::matrix(2, 4, {0.3, -0.1, 0.5, 0.2,  //
                                       -0.4, 0.6, 0.1, -0.2});
  return v;
}

}  // namespace

TEST_CASE("a start-at-goal episode is supervised with a single end action") {
  NavGraph g = solo_graph(3);
  Vocabulary vocab = inline_vocab();
  ModelConfig mc = small_model();
  mc.dropout_p = 0.0;  // makes the training-mode forward pass deterministic
  AgentModel model(mc, vocab, g.feature_dim(), 21);

  Episode ep;
  ep.id = "solo_ep";
  ep.path = {0};
  ep.start_heading_bin = 2;
  ep.instruction = "stay here";
  ep.split = "train";

  TrainConfig cfg = base_config();
  cfg.model = mc;
  cfg.force_oracle = true;

  RngStream rng(99);
  RolloutResult rr = rollout_train(model, g, ep, cfg, rng);

  REQUIRE(rr.record.actions.size() == 1);
  CHECK(rr.record.actions[0] == Action::EndEpisode);
  CHECK(rr.record.poses.size() == 2);
  CHECK(rr.record.truncated == false);
  CHECK(rr.record.traveled_m == 0.0);

  // Recompute the step by hand in eval mode; with dropout off the two modes
  // must produce the same distribution, so the loss is -log p[end].
  EpisodeContext ctx = model.make_context(ep.instruction);
  DecoderState st = model.initial_state();
  AgentPose pose{0, ep.start_heading_bin, 0};
  RngStream unused(0);
  ag::Variable grid = model.observe(g, pose);
  auto [s_t, alpha] = model.attend(ctx, st.h);
  ag::Variable filters = model.make_filters(s_t, /*train=*/false, unused);
  ag::Variable response = model.respond(filters, grid);
  auto [p, next] = model.policy_step(st, response, /*train=*/false, unused);

  double expect = -std::log(p.value()[static_cast<size_t>(Action::EndEpisode)]);
  CHECK(rr.loss_value == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rr.loss_value > 0.0);
}

TEST_CASE("oracle-forced rollouts retrace the ground-truth solution") {
  TrainFixture fx;
  AgentModel model(small_model(), fx.vocab, fx.w.graph.feature_dim(), 21);

  TrainConfig cfg = base_config();
  cfg.force_oracle = true;

  for (const auto& ep : fx.w.train) {
    EpisodeRecord oracle = run_oracle_rollout(fx.w.graph, ep);
    RngStream rng(derive_seed(5, {fnv1a64(ep.id)}));
    RolloutResult rr = rollout_train(model, fx.w.graph, ep, cfg, rng);

    INFO("episode ", ep.id);
    CHECK(rr.record.actions == oracle.actions);
    CHECK(rr.record.truncated == false);
    CHECK(rr.record.poses.back().node == ep.path.back());
    CHECK(std::isfinite(rr.loss_value));
    CHECK(rr.loss_value > 0.0);
  }
}

TEST_CASE("the per-episode step budget truncates a rollout") {
  TrainFixture fx;
  AgentModel model(small_model(), fx.vocab, fx.w.graph.feature_dim(), 21);

  // Pick an episode whose oracle solution needs more than two steps.
  const Episode* ep = nullptr;
  for (const auto& e : fx.w.train) {
    if (run_oracle_rollout(fx.w.graph, e).actions.size() > 2) {
      ep = &e;
      break;
    }
  }
  REQUIRE(ep != nullptr);

  TrainConfig cfg = base_config();
  cfg.force_oracle = true;
  cfg.max_episode_steps = 2;

  RngStream rng(7);
  RolloutResult rr = rollout_train(model, fx.w.graph, *ep, cfg, rng);
  CHECK(rr.record.truncated == true);
  CHECK(rr.record.actions.size() == 2);
  CHECK(rr.record.poses.size() == 3);
}

TEST_CASE("greedy evaluation is deterministic and thread-count invariant") {
  TrainFixture fx;
  AgentModel model(small_model(), fx.vocab, fx.w.graph.feature_dim(), 21);

  const Episode& ep = fx.w.train.front();
  EpisodeRecord a = rollout_policy(model, fx.w.graph, ep, 48);
  EpisodeRecord b = rollout_policy(model, fx.w.graph, ep, 48);
  CHECK(a.actions == b.actions);
  CHECK(a.traveled_m == b.traveled_m);
  REQUIRE(a.poses.size() == b.poses.size());
  for (size_t i = 0; i < a.poses.size(); ++i) {
    CHECK(a.poses[i].node == b.poses[i].node);
    CHECK(a.poses[i].heading_bin == b.poses[i].heading_bin);
    CHECK(a.poses[i].elev_bin == b.poses[i].elev_bin);
  }

  SplitScore s1 = evaluate_split(model, fx.w.graph, fx.w.train, 48, 1);
  SplitScore s2 = evaluate_split(model, fx.w.graph, fx.w.train, 48, 2);
  CHECK(s1.n == fx.w.train.size());
  CHECK(s1.n == s2.n);
  CHECK(s1.ne == s2.ne);
  CHECK(s1.sr == s2.sr);
  CHECK(s1.osr == s2.osr);
  CHECK(s1.spl == s2.spl);

  CHECK_THROWS_AS(evaluate_split(model, fx.w.graph, {}, 48, 1), ConfigError);
}

TEST_CASE("training config problems are collected into one report") {
  TrainFixture fx;
  TrainConfig cfg = base_config();
  cfg.lr = 0.0;
  cfg.batch_size = 0;
  cfg.max_epochs = 0;
  cfg.max_episode_steps = 0;
  cfg.patience = 0;

  TempDir out("trainer_out");
  try {
    train(cfg, fx.w.graph, fx.vocab, fx.w.train, fx.w.val_seen, fx.w.val_unseen,
          out.path.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("lr must be positive") != std::string::npos);
    CHECK(msg.find("batch_size must be >= 1") != std::string::npos);
    CHECK(msg.find("max_epochs must be >= 1") != std::string::npos);
    CHECK(msg.find("max_episode_steps must be >= 1") != std::string::npos);
    CHECK(msg.find("patience must be >= 1") != std::string::npos);
  }
}

TEST_CASE("training requires non-empty train and val_seen splits") {
  TrainFixture fx;
  TrainConfig cfg = base_config();
  TempDir out("trainer_out");

  CHECK_THROWS_WITH_AS(train(cfg, fx.w.graph, fx.vocab, {}, fx.w.val_seen, {},
                             out.path.string()),
                       "training split is empty", ConfigError);
  CHECK_THROWS_WITH_AS(train(cfg, fx.w.graph, fx.vocab, fx.w.train, {}, {},
                             out.path.string()),
                       "val_seen split is empty", ConfigError);
}

TEST_CASE("a step budget below the longest oracle solution is rejected") {
  TrainFixture fx;
  size_t longest = longest_oracle(fx.w.graph, fx.w.train);
  REQUIRE(longest >= 2);

  TrainConfig cfg = base_config();
  cfg.max_episode_steps = longest - 1;

  TempDir out("trainer_out");
  try {
    train(cfg, fx.w.graph, fx.vocab, fx.w.train, fx.w.val_seen, {},
          out.path.string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("longest oracle rollout") != std::string::npos);
    CHECK(msg.find(std::to_string(longest)) != std::string::npos);
  }
}

TEST_CASE("early stopping halts once patience epochs bring no improvement") {
  TrainFixture fx;
  TrainConfig cfg = base_config();
  cfg.lr = 1e-12;  // updates too small to change any greedy decision
  cfg.max_epochs = 10;
  cfg.patience = 1;

  TempDir out("trainer_out");
  std::vector<size_t> seen_epochs;
  TrainReport rep =
      train(cfg, fx.w.graph, fx.vocab, fx.w.train, fx.w.val_seen, {},
            out.path.string(),
            [&seen_epochs](const EpochStats& st) { seen_epochs.push_back(st.epoch); });

  // Epoch 1 always improves on the initial -1 sentinel; with a frozen policy
  // epoch 2 repeats the same metric, exhausting patience immediately.
  REQUIRE(rep.epochs.size() == 2);
  CHECK(rep.epochs[0].improved == true);
  CHECK(rep.epochs[1].improved == false);
  CHECK(rep.epochs[0].stop_metric == rep.epochs[1].stop_metric);
  CHECK(rep.best_epoch == 1);
  CHECK(rep.best_metric == rep.epochs[0].stop_metric);
  CHECK(seen_epochs == std::vector<size_t>{1, 2});
  CHECK(rep.checkpoint_path == out.path.string() + "/model.ckpt");
  CHECK(fs::exists(rep.checkpoint_path));
}

TEST_CASE("a non-finite parameter aborts the rollout with a numeric error") {
  TrainFixture fx;
  AgentModel model(small_model(), fx.vocab, fx.w.graph.feature_dim(), 21);
  model.params().get("agent.head.b").mutable_value()[0] =
      std::numeric_limits<double>::quiet_NaN();

  TrainConfig cfg = base_config();
  cfg.force_oracle = true;
  const Episode& ep = fx.w.train.front();

  // The first op that consumes the poisoned tensor refuses to build a node,
  // so the failure is caught during the forward pass, before any update.
  RngStream rng(3);
  try {
    rollout_train(model, fx.w.graph, ep, cfg, rng);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("training is reproducible and its report matches the data") {
  TrainFixture fx;
  TrainConfig cfg = base_config();

  TempDir out_a("trainer_out");
  TempDir out_b("trainer_out");
  TrainReport ra = train(cfg, fx.w.graph, fx.vocab, fx.w.train, fx.w.val_seen, {},
                         out_a.path.string());
  TrainReport rb = train(cfg, fx.w.graph, fx.vocab, fx.w.train, fx.w.val_seen, {},
                         out_b.path.string());

  AgentModel audit(cfg.model, fx.vocab, fx.w.graph.feature_dim(), cfg.seed);
  CHECK(ra.param_count == audit.expected_param_count());

  // No early stop is possible inside the patience window, so both runs train
  // the full two epochs.
  REQUIRE(ra.epochs.size() == 2);
  REQUIRE(rb.epochs.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    INFO("epoch ", i + 1);
    CHECK(ra.epochs[i].epoch == i + 1);
    CHECK(ra.epochs[i].mean_loss == rb.epochs[i].mean_loss);
    CHECK(ra.epochs[i].val_seen.ne == rb.epochs[i].val_seen.ne);
    CHECK(ra.epochs[i].val_seen.sr == rb.epochs[i].val_seen.sr);
    CHECK(ra.epochs[i].val_seen.osr == rb.epochs[i].val_seen.osr);
    CHECK(ra.epochs[i].val_seen.spl == rb.epochs[i].val_seen.spl);
    CHECK(ra.epochs[i].stop_metric == rb.epochs[i].stop_metric);
    CHECK(ra.epochs[i].improved == rb.epochs[i].improved);

    CHECK(ra.epochs[i].val_seen.n == fx.w.val_seen.size());
    CHECK(ra.epochs[i].val_unseen.n == 0);
    CHECK(ra.epochs[i].stop_metric == ra.epochs[i].val_seen.sr);
    CHECK(std::isfinite(ra.epochs[i].mean_loss));
    CHECK(ra.epochs[i].mean_loss > 0.0);
  }
  CHECK(ra.best_epoch == rb.best_epoch);
  CHECK(ra.best_metric == rb.best_metric);

  std::string bytes_a = read_file(out_a.file("model.ckpt"));
  std::string bytes_b = read_file(out_b.file("model.ckpt"));
  CHECK(bytes_a == bytes_b);

  // The retained checkpoint reproduces the best epoch's validation scores.
  AgentModel restored(cfg.model, fx.vocab, fx.w.graph.feature_dim(), cfg.seed);
  load_checkpoint(out_a.file("model.ckpt"), restored.params());
  SplitScore again = evaluate_split(restored, fx.w.graph, fx.w.val_seen,
                                    cfg.max_episode_steps, 1);
  const EpochStats& best = ra.epochs[ra.best_epoch - 1];
  CHECK(again.ne == best.val_seen.ne);
  CHECK(again.sr == best.val_seen.sr);
  CHECK(again.osr == best.val_seen.osr);
  CHECK(again.spl == best.val_seen.spl);
}

TEST_CASE("the ablation table lists the four studied variants in order") {
  const auto& variants = ablation_variants();
  REQUIRE(variants.size() == 4);

  CHECK(variants[0].name == "static_last_hidden");
  CHECK(variants[0].dynamic_filters == false);
  CHECK(variants[0].use_attention == false);
  CHECK(variants[0].pretrained_embeddings == true);

  CHECK(variants[1].name == "dynamic_last_hidden");
  CHECK(variants[1].dynamic_filters == true);
  CHECK(variants[1].use_attention == false);
  CHECK(variants[1].pretrained_embeddings == true);

  CHECK(variants[2].name == "dynamic_attention_scratch");
  CHECK(variants[2].dynamic_filters == true);
  CHECK(variants[2].use_attention == true);
  CHECK(variants[2].pretrained_embeddings == false);

  CHECK(variants[3].name == "dynamic_attention_pretrained");
  CHECK(variants[3].dynamic_filters == true);
  CHECK(variants[3].use_attention == true);
  CHECK(variants[3].pretrained_embeddings == true);
}

TEST_CASE("the ablation suite trains one row per variant") {
  TrainFixture fx;
  TrainConfig cfg = base_config();
  cfg.max_epochs = 1;
  cfg.patience = 1;

  TempDir out("trainer_out");
  std::set<std::string> runs;
  AblationReport rep = run_ablation_suite(
      cfg, fx.w.graph, fx.vocab, fx.w.train, fx.w.val_seen, {}, out.path.string(),
      [&runs](const std::string& run, const EpochStats& st) {
        runs.insert(run);
        CHECK(st.epoch == 1);
      });

  REQUIRE(rep.rows.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    const AblationRow& row = rep.rows[i];
    CHECK(row.variant.name == ablation_variants()[i].name);
    CHECK(row.best_epoch == 1);
    CHECK(row.val_seen.n == fx.w.val_seen.size());
    CHECK(fs::exists(row.checkpoint_path));
    CHECK(row.checkpoint_path.find(row.variant.name) != std::string::npos);
  }
  CHECK(runs == std::set<std::string>{"static_last_hidden", "dynamic_last_hidden",
                                      "dynamic_attention_scratch",
                                      "dynamic_attention_pretrained"});
}

TEST_CASE("the filter sweep reports ascending sizes with audited parameters") {
  TrainFixture fx;
  TrainConfig cfg = base_config();
  cfg.max_epochs = 1;
  cfg.patience = 1;

  TempDir out("trainer_out");
  SweepReport rep =
      run_filter_sweep(cfg, fx.w.graph, fx.vocab, fx.w.train, fx.w.val_seen, {},
                       out.path.string(), {2, 1});

  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].n_filters == 1);
  CHECK(rep.rows[1].n_filters == 2);
  for (const SweepRow& row : rep.rows) {
    ModelConfig mc = cfg.model;
    mc.n_filters = row.n_filters;
    AgentModel probe(mc, fx.vocab, fx.w.graph.feature_dim(), cfg.seed);
    CHECK(row.param_count == probe.expected_param_count());
    CHECK(row.val_seen.n == fx.w.val_seen.size());
    CHECK(fs::exists(row.checkpoint_path));
  }

  CHECK_THROWS_AS(run_filter_sweep(cfg, fx.w.graph, fx.vocab, fx.w.train,
                                   fx.w.val_seen, {}, out.path.string(), {}),
                  ConfigError);
}
