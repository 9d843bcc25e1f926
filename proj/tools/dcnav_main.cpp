#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcnav/agent.hpp"
#include "dcnav/checkpoint.hpp"
#include "dcnav/encoders.hpp"
#include "dcnav/error.hpp"
#include "dcnav/metrics.hpp"
#include "dcnav/sim_env.hpp"
#include "dcnav/trainer.hpp"
#include "dcnav/util.hpp"
#include "dcnav/world_gen.hpp"

namespace {

using dcnav::ConfigError;
using ordered_json = nlohmann::ordered_json;

struct PathsConfig {
  std::string data;
  std::string stopwords;
  std::string checkpoint;
  std::string out;
};

struct RunConfig {
  uint64_t seed = 7;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  dcnav::WorldSpec world;
  dcnav::TrainConfig train;
  PathsConfig paths;
};

// Everything settable on the command line; unset optionals defer to the
// config file, which defers to defaults.
struct Flags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<unsigned> threads;

  std::optional<size_t> rooms_x, rooms_y, n_tags, feature_dim;
  std::optional<size_t> ep_train, ep_val_seen, ep_val_unseen;
  std::optional<double> room_size;

  std::optional<size_t> hidden, bottleneck, d_att, filters;
  std::optional<double> dropout;
  std::optional<bool> dynamic_filters, use_attention, pretrained_embeddings;
  std::optional<bool> absolute_theta;

  std::optional<double> lr;
  std::optional<size_t> batch, epochs, max_steps, patience;
  bool force_oracle = false;

  std::string data, stopwords, checkpoint, out;
  std::string split;
  std::string episode_id;
  bool oracle = false;
  std::vector<size_t> sweep_filters;
};

void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                const std::string& section, std::vector<std::string>& problems) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      problems.push_back("unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out,
                const std::string& section, std::vector<std::string>& problems) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    problems.push_back("bad value for '" + std::string(key) + "' in " + section);
  }
}

// seed is handled separately so the DCNV_SEED fallback can tell whether the
// config file set it.
void apply_config_file(RunConfig& rc, const std::string& path, bool& seed_was_set) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(dcnav::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw dcnav::ParseError(path + ": " + e.what());
  }
  std::vector<std::string> problems;
  check_keys(j, {"seed", "threads", "world", "model", "train", "paths"}, "config",
             problems);
  if (j.contains("seed")) {
    read_field(j, "seed", rc.seed, "config", problems);
    seed_was_set = true;
  }
  read_field(j, "threads", rc.threads, "config", problems);

  if (j.contains("world")) {
    const auto& w = j.at("world");
    check_keys(w, {"rooms_x", "rooms_y", "room_size", "n_object_tags",
                   "feature_dim", "episodes"}, "world", problems);
    read_field(w, "rooms_x", rc.world.rooms_x, "world", problems);
    read_field(w, "rooms_y", rc.world.rooms_y, "world", problems);
    read_field(w, "room_size", rc.world.room_size, "world", problems);
    read_field(w, "n_object_tags", rc.world.n_object_tags, "world", problems);
    read_field(w, "feature_dim", rc.world.feature_dim, "world", problems);
    if (w.contains("episodes")) {
      const auto& e = w.at("episodes");
      check_keys(e, {"train", "val_seen", "val_unseen"}, "world.episodes", problems);
      read_field(e, "train", rc.world.episodes.train, "world.episodes", problems);
      read_field(e, "val_seen", rc.world.episodes.val_seen, "world.episodes", problems);
      read_field(e, "val_unseen", rc.world.episodes.val_unseen, "world.episodes",
                 problems);
    }
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    auto& mc = rc.train.model;
    check_keys(m, {"hidden", "bottleneck", "d_att", "n_filters", "dynamic_filters",
                   "use_attention", "pretrained_embeddings",
                   "absolute_elevation_coords", "dropout_p"}, "model", problems);
    read_field(m, "hidden", mc.hidden, "model", problems);
    read_field(m, "bottleneck", mc.bottleneck, "model", problems);
    read_field(m, "d_att", mc.d_att, "model", problems);
    read_field(m, "n_filters", mc.n_filters, "model", problems);
    read_field(m, "dynamic_filters", mc.dynamic_filters, "model", problems);
    read_field(m, "use_attention", mc.use_attention, "model", problems);
    read_field(m, "pretrained_embeddings", mc.pretrained_embeddings, "model", problems);
    read_field(m, "absolute_elevation_coords", mc.absolute_elevation_coords, "model",
               problems);
    read_field(m, "dropout_p", mc.dropout_p, "model", problems);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"lr", "batch_size", "max_epochs", "max_episode_steps", "patience",
                   "force_oracle"}, "train", problems);
    read_field(t, "lr", rc.train.lr, "train", problems);
    read_field(t, "batch_size", rc.train.batch_size, "train", problems);
    read_field(t, "max_epochs", rc.train.max_epochs, "train", problems);
    read_field(t, "max_episode_steps", rc.train.max_episode_steps, "train", problems);
    read_field(t, "patience", rc.train.patience, "train", problems);
    read_field(t, "force_oracle", rc.train.force_oracle, "train", problems);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, {"data", "stopwords", "checkpoint", "out"}, "paths", problems);
    read_field(p, "data", rc.paths.data, "paths", problems);
    read_field(p, "stopwords", rc.paths.stopwords, "paths", problems);
    read_field(p, "checkpoint", rc.paths.checkpoint, "paths", problems);
    read_field(p, "out", rc.paths.out, "paths", problems);
  }
  if (!problems.empty()) {
    std::string msg = path + ": invalid config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

RunConfig resolve_config(const Flags& f) {
  RunConfig rc;
  bool seed_set = false;
  if (!f.config_path.empty()) apply_config_file(rc, f.config_path, seed_set);

  if (f.seed) {
    rc.seed = *f.seed;
  } else if (!seed_set) {
    if (const char* env = std::getenv("DCNV_SEED")) {
      char* end = nullptr;
      unsigned long long v = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0') {
        throw ConfigError(std::string("DCNV_SEED is not an integer: '") + env + "'");
      }
      rc.seed = v;
    }
  }
  if (f.threads) rc.threads = *f.threads;

  if (f.rooms_x) rc.world.rooms_x = *f.rooms_x;
  if (f.rooms_y) rc.world.rooms_y = *f.rooms_y;
  if (f.room_size) rc.world.room_size = *f.room_size;
  if (f.n_tags) rc.world.n_object_tags = *f.n_tags;
  if (f.feature_dim) rc.world.feature_dim = *f.feature_dim;
  if (f.ep_train) rc.world.episodes.train = *f.ep_train;
  if (f.ep_val_seen) rc.world.episodes.val_seen = *f.ep_val_seen;
  if (f.ep_val_unseen) rc.world.episodes.val_unseen = *f.ep_val_unseen;

  auto& mc = rc.train.model;
  if (f.hidden) mc.hidden = *f.hidden;
  if (f.bottleneck) mc.bottleneck = *f.bottleneck;
  if (f.d_att) mc.d_att = *f.d_att;
  if (f.filters) mc.n_filters = *f.filters;
  if (f.dropout) mc.dropout_p = *f.dropout;
  if (f.dynamic_filters) mc.dynamic_filters = *f.dynamic_filters;
  if (f.use_attention) mc.use_attention = *f.use_attention;
  if (f.pretrained_embeddings) mc.pretrained_embeddings = *f.pretrained_embeddings;
  if (f.absolute_theta) mc.absolute_elevation_coords = *f.absolute_theta;

  if (f.lr) rc.train.lr = *f.lr;
  if (f.batch) rc.train.batch_size = *f.batch;
  if (f.epochs) rc.train.max_epochs = *f.epochs;
  if (f.max_steps) rc.train.max_episode_steps = *f.max_steps;
  if (f.patience) rc.train.patience = *f.patience;
  if (f.force_oracle) rc.train.force_oracle = true;

  if (!f.data.empty()) rc.paths.data = f.data;
  if (!f.stopwords.empty()) rc.paths.stopwords = f.stopwords;
  if (!f.checkpoint.empty()) rc.paths.checkpoint = f.checkpoint;
  if (!f.out.empty()) rc.paths.out = f.out;

  rc.world.seed = rc.seed;
  rc.train.seed = rc.seed;
  rc.train.threads = rc.threads;
  return rc;
}

ordered_json model_json(const dcnav::ModelConfig& m) {
  ordered_json j;
  j["hidden"] = m.hidden;
  j["bottleneck"] = m.bottleneck;
  j["d_att"] = m.d_att;
  j["n_filters"] = m.n_filters;
  j["dynamic_filters"] = m.dynamic_filters;
  j["use_attention"] = m.use_attention;
  j["pretrained_embeddings"] = m.pretrained_embeddings;
  j["absolute_elevation_coords"] = m.absolute_elevation_coords;
  j["dropout_p"] = m.dropout_p;
  return j;
}

ordered_json train_json(const dcnav::TrainConfig& t) {
  ordered_json j;
  j["lr"] = t.lr;
  j["batch_size"] = t.batch_size;
  j["max_epochs"] = t.max_epochs;
  j["max_episode_steps"] = t.max_episode_steps;
  j["patience"] = t.patience;
  j["force_oracle"] = t.force_oracle;
  return j;
}

ordered_json resolved_json(const RunConfig& rc) {
  ordered_json j;
  j["seed"] = rc.seed;
  j["threads"] = rc.threads;
  ordered_json w;
  w["rooms_x"] = rc.world.rooms_x;
  w["rooms_y"] = rc.world.rooms_y;
  w["room_size"] = rc.world.room_size;
  w["n_object_tags"] = rc.world.n_object_tags;
  w["feature_dim"] = rc.world.feature_dim;
  w["episodes"] = {{"train", rc.world.episodes.train},
                   {"val_seen", rc.world.episodes.val_seen},
                   {"val_unseen", rc.world.episodes.val_unseen}};
  j["world"] = std::move(w);
  j["model"] = model_json(rc.train.model);
  j["train"] = train_json(rc.train);
  ordered_json p;
  p["data"] = rc.paths.data;
  p["stopwords"] = rc.paths.stopwords;
  p["checkpoint"] = rc.paths.checkpoint;
  p["out"] = rc.paths.out;
  j["paths"] = std::move(p);
  return j;
}

void write_resolved(const RunConfig& rc) {
  dcnav::atomic_write_file(rc.paths.out + "/resolved_config.json",
                           resolved_json(rc).dump(2) + "\n");
}

ordered_json split_json(const dcnav::SplitScore& s) {
  ordered_json j;
  j["n"] = s.n;
  j["NE"] = s.ne;
  j["SR"] = s.sr;
  j["OSR"] = s.osr;
  j["SPL"] = s.spl;
  return j;
}

ordered_json epoch_json(const dcnav::EpochStats& st) {
  ordered_json j;
  j["epoch"] = st.epoch;
  j["mean_loss"] = st.mean_loss;
  j["val_seen"] = split_json(st.val_seen);
  if (st.val_unseen.n > 0) j["val_unseen"] = split_json(st.val_unseen);
  j["stop_metric"] = st.stop_metric;
  j["improved"] = st.improved;
  return j;
}

ordered_json report_json(const dcnav::TrainReport& rep) {
  ordered_json j;
  ordered_json cfg;
  cfg["seed"] = rep.config.seed;
  cfg["model"] = model_json(rep.config.model);
  cfg["train"] = train_json(rep.config);
  j["config"] = std::move(cfg);
  j["param_count"] = rep.param_count;
  ordered_json epochs = ordered_json::array();
  for (const auto& st : rep.epochs) epochs.push_back(epoch_json(st));
  j["epochs"] = std::move(epochs);
  j["best_epoch"] = rep.best_epoch;
  j["best_metric"] = rep.best_metric;
  j["checkpoint"] = std::filesystem::path(rep.checkpoint_path).filename().string();
  return j;
}

void print_manifest(const std::vector<std::pair<std::string, std::string>>& files) {
  ordered_json arr = ordered_json::array();
  for (const auto& [name, hash] : files) {
    arr.push_back({{"file", name}, {"hash", hash}});
  }
  ordered_json j;
  j["manifest"] = std::move(arr);
  std::cout << j.dump() << "\n";
}

// Manifest entry for an already-written file, hashing its bytes on disk.
std::pair<std::string, std::string> manifest_entry(const std::string& dir,
                                                   const std::string& name) {
  return {name, dcnav::file_hash_hex(dir + "/" + name)};
}

void require_paths(const std::vector<std::pair<std::string, std::string>>& entries) {
  std::vector<std::string> problems;
  for (const auto& [what, path] : entries) {
    if (path.empty()) {
      problems.push_back(what + " not set (flag or config `paths` section)");
    } else if (!std::filesystem::exists(path)) {
      problems.push_back(what + " does not exist: " + path);
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid invocation:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

std::string data_file(const RunConfig& rc, const std::string& name) {
  return rc.paths.data + "/" + name;
}

std::vector<dcnav::Episode> load_split(const RunConfig& rc, const dcnav::NavGraph& g,
                                       const std::string& split, bool required) {
  std::string path = data_file(rc, "episodes_" + split + ".json");
  if (!std::filesystem::exists(path)) {
    if (required) throw ConfigError("split file missing: " + path);
    return {};
  }
  return dcnav::load_r2r_format(path, g, split);
}

dcnav::AgentModel load_model(const RunConfig& rc, const dcnav::Vocabulary& vocab,
                             const dcnav::NavGraph& g) {
  dcnav::AgentModel model(rc.train.model, vocab, g.feature_dim(), rc.seed);
  dcnav::load_checkpoint(rc.paths.checkpoint, model.params());
  return model;
}

// ---------------------------------------------------------------- commands

int cmd_gen_world(const RunConfig& rc) {
  if (rc.paths.out.empty()) throw ConfigError("gen-world needs --out");
  std::cerr << "[gen-world] seed " << rc.seed << ", " << rc.world.rooms_x << "x"
            << rc.world.rooms_y << " rooms\n";
  dcnav::GeneratedWorld w = dcnav::generate_world(rc.world);
  dcnav::FileManifest manifest = dcnav::write_world_files(w, rc.paths.out);
  write_resolved(rc);
  std::cerr << "[gen-world] wrote " << manifest.files.size() << " files to "
            << rc.paths.out << "\n";
  print_manifest(manifest.files);
  return 0;
}

int cmd_train(const RunConfig& rc) {
  require_paths({{"--data", rc.paths.data}, {"--stopwords", rc.paths.stopwords}});
  if (rc.paths.out.empty()) throw ConfigError("train needs --out");
  dcnav::NavGraph g = dcnav::NavGraph::load_json(data_file(rc, "world.json"));
  dcnav::Vocabulary vocab =
      dcnav::Vocabulary::load(data_file(rc, "embeddings.txt"), rc.paths.stopwords);
  auto train_eps = load_split(rc, g, "train", true);
  auto val_seen = load_split(rc, g, "val_seen", true);
  auto val_unseen = load_split(rc, g, "val_unseen", false);
  std::cerr << "[train] " << train_eps.size() << " train / " << val_seen.size()
            << " val_seen / " << val_unseen.size() << " val_unseen episodes\n";

  dcnav::TrainReport rep = dcnav::train(
      rc.train, g, vocab, train_eps, val_seen, val_unseen, rc.paths.out,
      [](const dcnav::EpochStats& st) { std::cout << epoch_json(st).dump() << "\n"; });

  dcnav::atomic_write_file(rc.paths.out + "/train_report.json",
                           report_json(rep).dump(2) + "\n");
  write_resolved(rc);
  std::cerr << "[train] best epoch " << rep.best_epoch << " (metric "
            << rep.best_metric << ")\n";
  print_manifest({manifest_entry(rc.paths.out, "model.ckpt"),
                  manifest_entry(rc.paths.out, "train_report.json")});
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& split, bool oracle) {
  require_paths({{"--data", rc.paths.data}});
  if (rc.paths.out.empty()) throw ConfigError("eval needs --out");
  dcnav::NavGraph g = dcnav::NavGraph::load_json(data_file(rc, "world.json"));
  auto episodes = load_split(rc, g, split, true);

  std::vector<dcnav::EpisodeRecord> records(episodes.size());
  if (oracle) {
    dcnav::parallel_for(episodes.size(), rc.threads, [&](size_t i) {
      records[i] = dcnav::run_oracle_rollout(g, episodes[i]);
    });
  } else {
    require_paths({{"--stopwords", rc.paths.stopwords},
                   {"--checkpoint", rc.paths.checkpoint}});
    dcnav::Vocabulary vocab =
        dcnav::Vocabulary::load(data_file(rc, "embeddings.txt"), rc.paths.stopwords);
    dcnav::AgentModel model = load_model(rc, vocab, g);
    dcnav::parallel_for(episodes.size(), rc.threads, [&](size_t i) {
      records[i] =
          dcnav::rollout_policy(model, g, episodes[i], rc.train.max_episode_steps);
    });
  }

  std::string lines;
  std::vector<size_t> goals(episodes.size());
  for (size_t i = 0; i < episodes.size(); ++i) {
    goals[i] = episodes[i].path.back();
    dcnav::EpisodeScore sc = dcnav::score_episode(g, records[i], goals[i]);
    ordered_json j;
    j["episode_id"] = records[i].episode_id;
    ordered_json actions = ordered_json::array();
    for (dcnav::Action a : records[i].actions) actions.push_back(dcnav::action_name(a));
    j["actions"] = std::move(actions);
    ordered_json nodes = ordered_json::array();
    for (const auto& pose : records[i].poses) nodes.push_back(g.node(pose.node).id);
    j["nodes"] = std::move(nodes);
    j["truncated"] = records[i].truncated;
    j["NE"] = sc.ne_m;
    j["NE_euclid"] = sc.ne_euclid_m;
    j["success"] = sc.success;
    j["oracle_success"] = sc.oracle_success;
    j["SPL"] = sc.spl;
    j["path_length"] = sc.path_length_m;
    j["shortest_length"] = sc.shortest_length_m;
    lines += j.dump() + "\n";
  }
  dcnav::SplitScore agg = dcnav::score_split(g, records, goals);

  dcnav::atomic_write_file(rc.paths.out + "/trajectories.jsonl", lines);
  ordered_json summary;
  summary["split"] = split;
  summary["oracle"] = oracle;
  ordered_json agg_json = split_json(agg);
  for (auto& [k, v] : agg_json.items()) summary[k] = v;
  dcnav::atomic_write_file(rc.paths.out + "/summary.json", summary.dump(2) + "\n");
  write_resolved(rc);

  ordered_json line;
  line["summary"] = summary;
  std::cout << line.dump() << "\n";
  print_manifest({manifest_entry(rc.paths.out, "trajectories.jsonl"),
                  manifest_entry(rc.paths.out, "summary.json")});
  return 0;
}

int cmd_rollout(const RunConfig& rc, const std::string& split,
                const std::string& episode_id, bool oracle) {
  require_paths({{"--data", rc.paths.data}});
  dcnav::NavGraph g = dcnav::NavGraph::load_json(data_file(rc, "world.json"));
  auto episodes = load_split(rc, g, split, true);
  const dcnav::Episode* ep = nullptr;
  if (episode_id.empty()) {
    ep = &episodes.front();
  } else {
    for (const auto& e : episodes) {
      if (e.id == episode_id) {
        ep = &e;
        break;
      }
    }
    if (!ep) {
      throw ConfigError("episode '" + episode_id + "' not found in split " + split);
    }
  }

  dcnav::EpisodeRecord record;
  if (oracle) {
    record = dcnav::run_oracle_rollout(g, *ep);
  } else {
    require_paths({{"--stopwords", rc.paths.stopwords},
                   {"--checkpoint", rc.paths.checkpoint}});
    dcnav::Vocabulary vocab =
        dcnav::Vocabulary::load(data_file(rc, "embeddings.txt"), rc.paths.stopwords);
    dcnav::AgentModel model = load_model(rc, vocab, g);
    record = dcnav::rollout_policy(model, g, *ep, rc.train.max_episode_steps);
  }
  dcnav::EpisodeScore sc = dcnav::score_episode(g, record, ep->path.back());

  ordered_json j;
  j["episode_id"] = ep->id;
  j["instruction"] = ep->instruction;
  ordered_json steps = ordered_json::array();
  for (size_t t = 0; t < record.actions.size(); ++t) {
    ordered_json s;
    s["action"] = dcnav::action_name(record.actions[t]);
    s["node"] = g.node(record.poses[t + 1].node).id;
    s["heading_bin"] = record.poses[t + 1].heading_bin;
    s["elev_bin"] = record.poses[t + 1].elev_bin;
    steps.push_back(std::move(s));
  }
  j["start_node"] = g.node(record.poses.front().node).id;
  j["steps"] = std::move(steps);
  j["truncated"] = record.truncated;
  j["NE"] = sc.ne_m;
  j["success"] = sc.success;
  j["SPL"] = sc.spl;
  std::cout << j.dump(2) << "\n";
  return 0;
}

std::string fmt6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

void append_csv_row(std::string& csv, const std::string& label,
                    const std::string& split, const dcnav::SplitScore& s) {
  csv += label + "," + split + "," + fmt6(s.ne) + "," + fmt6(s.sr) + "," +
         fmt6(s.osr) + "," + fmt6(s.spl) + "\n";
}

int cmd_ablation(const RunConfig& rc) {
  require_paths({{"--data", rc.paths.data}, {"--stopwords", rc.paths.stopwords}});
  if (rc.paths.out.empty()) throw ConfigError("ablation needs --out");
  dcnav::NavGraph g = dcnav::NavGraph::load_json(data_file(rc, "world.json"));
  dcnav::Vocabulary vocab =
      dcnav::Vocabulary::load(data_file(rc, "embeddings.txt"), rc.paths.stopwords);
  auto train_eps = load_split(rc, g, "train", true);
  auto val_seen = load_split(rc, g, "val_seen", true);
  auto val_unseen = load_split(rc, g, "val_unseen", false);

  dcnav::AblationReport report = dcnav::run_ablation_suite(
      rc.train, g, vocab, train_eps, val_seen, val_unseen, rc.paths.out,
      [](const std::string& run, const dcnav::EpochStats& st) {
        ordered_json j = epoch_json(st);
        ordered_json line;
        line["run"] = run;
        for (auto& [k, v] : j.items()) line[k] = v;
        std::cout << line.dump() << "\n";
      });

  std::string csv = "variant,split,NE,SR,OSR,SPL\n";
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.rows) {
    append_csv_row(csv, row.variant.name, "val_seen", row.val_seen);
    if (row.val_unseen.n > 0) {
      append_csv_row(csv, row.variant.name, "val_unseen", row.val_unseen);
    }
    ordered_json r;
    r["variant"] = row.variant.name;
    r["dynamic_filters"] = row.variant.dynamic_filters;
    r["use_attention"] = row.variant.use_attention;
    r["pretrained_embeddings"] = row.variant.pretrained_embeddings;
    r["best_epoch"] = row.best_epoch;
    r["val_seen"] = split_json(row.val_seen);
    if (row.val_unseen.n > 0) r["val_unseen"] = split_json(row.val_unseen);
    rows.push_back(std::move(r));
  }
  dcnav::atomic_write_file(rc.paths.out + "/ablation.csv", csv);
  ordered_json jr;
  jr["rows"] = std::move(rows);
  dcnav::atomic_write_file(rc.paths.out + "/ablation.json", jr.dump(2) + "\n");
  write_resolved(rc);
  print_manifest({manifest_entry(rc.paths.out, "ablation.csv"),
                  manifest_entry(rc.paths.out, "ablation.json")});
  return 0;
}

int cmd_sweep(const RunConfig& rc, std::vector<size_t> filter_counts) {
  require_paths({{"--data", rc.paths.data}, {"--stopwords", rc.paths.stopwords}});
  if (rc.paths.out.empty()) throw ConfigError("sweep-filters needs --out");
  if (filter_counts.empty()) filter_counts = {1, 2, 4, 8, 16};
  dcnav::NavGraph g = dcnav::NavGraph::load_json(data_file(rc, "world.json"));
  dcnav::Vocabulary vocab =
      dcnav::Vocabulary::load(data_file(rc, "embeddings.txt"), rc.paths.stopwords);
  auto train_eps = load_split(rc, g, "train", true);
  auto val_seen = load_split(rc, g, "val_seen", true);
  auto val_unseen = load_split(rc, g, "val_unseen", false);

  dcnav::SweepReport report = dcnav::run_filter_sweep(
      rc.train, g, vocab, train_eps, val_seen, val_unseen, rc.paths.out,
      filter_counts, [](const std::string& run, const dcnav::EpochStats& st) {
        ordered_json j = epoch_json(st);
        ordered_json line;
        line["run"] = run;
        for (auto& [k, v] : j.items()) line[k] = v;
        std::cout << line.dump() << "\n";
      });

  std::string csv = "M,split,NE,SR,OSR,SPL\n";
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.rows) {
    append_csv_row(csv, std::to_string(row.n_filters), "val_seen", row.val_seen);
    if (row.val_unseen.n > 0) {
      append_csv_row(csv, std::to_string(row.n_filters), "val_unseen", row.val_unseen);
    }
    ordered_json r;
    r["M"] = row.n_filters;
    r["param_count"] = row.param_count;
    r["best_epoch"] = row.best_epoch;
    r["val_seen"] = split_json(row.val_seen);
    if (row.val_unseen.n > 0) r["val_unseen"] = split_json(row.val_unseen);
    rows.push_back(std::move(r));
  }
  dcnav::atomic_write_file(rc.paths.out + "/sweep.csv", csv);
  ordered_json jr;
  jr["rows"] = std::move(rows);
  dcnav::atomic_write_file(rc.paths.out + "/sweep.json", jr.dump(2) + "\n");
  write_resolved(rc);
  print_manifest({manifest_entry(rc.paths.out, "sweep.csv"),
                  manifest_entry(rc.paths.out, "sweep.json")});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"navigation agent with language-conditioned dynamic filters"};
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "JSON config file (flags override it)");
    sub->add_option("--seed", f.seed, "master seed (fallback: DCNV_SEED, then 7)");
    sub->add_option("--threads", f.threads, "worker thread cap");
  };
  auto add_model_flags = [&f](CLI::App* sub) {
    sub->add_option("--hidden", f.hidden, "LSTM hidden size");
    sub->add_option("--bottleneck", f.bottleneck, "visual bottleneck channels");
    sub->add_option("--d-att", f.d_att, "attention projection width");
    sub->add_option("--filters", f.filters, "dynamic filter count M");
    sub->add_option("--dropout", f.dropout, "dropout probability");
    sub->add_flag_callback("--static-filters", [&f] { f.dynamic_filters = false; },
                           "learned-constant filter bank");
    sub->add_flag_callback("--dynamic-filters", [&f] { f.dynamic_filters = true; },
                           "language-generated filters (default)");
    sub->add_flag_callback("--no-attention", [&f] { f.use_attention = false; },
                           "use the encoder's last hidden state instead");
    sub->add_flag_callback("--attention", [&f] { f.use_attention = true; },
                           "instruction attention (default)");
    sub->add_flag_callback("--scratch-embeddings",
                           [&f] { f.pretrained_embeddings = false; },
                           "train word embeddings from scratch");
    sub->add_flag_callback("--pretrained-embeddings",
                           [&f] { f.pretrained_embeddings = true; },
                           "frozen file embeddings (default)");
    sub->add_flag_callback("--absolute-elevation",
                           [&f] { f.absolute_theta = true; },
                           "absolute instead of agent-relative cell elevation");
  };
  auto add_train_flags = [&f, &add_model_flags](CLI::App* sub) {
    add_model_flags(sub);
    sub->add_option("--lr", f.lr, "Adam learning rate");
    sub->add_option("--batch", f.batch, "episodes per batch");
    sub->add_option("--epochs", f.epochs, "epoch cap");
    sub->add_option("--max-steps", f.max_steps, "per-episode step budget");
    sub->add_option("--patience", f.patience, "early-stopping patience");
    sub->add_flag("--force-oracle", f.force_oracle,
                  "debug: execute oracle labels instead of sampled actions");
  };
  auto add_data_flags = [&f](CLI::App* sub) {
    sub->add_option("--data", f.data, "directory from gen-world");
    sub->add_option("--stopwords", f.stopwords, "stopword list file");
  };

  CLI::App* gen = app.add_subcommand("gen-world", "generate a synthetic world + datasets");
  add_common(gen);
  gen->add_option("--out", f.out, "output directory");
  gen->add_option("--rooms-x", f.rooms_x, "room grid width");
  gen->add_option("--rooms-y", f.rooms_y, "room grid height");
  gen->add_option("--room-size", f.room_size, "room edge length (meters)");
  gen->add_option("--tags", f.n_tags, "object tag count");
  gen->add_option("--feature-dim", f.feature_dim, "visual feature dimension");
  gen->add_option("--train-episodes", f.ep_train, "train split size");
  gen->add_option("--val-seen-episodes", f.ep_val_seen, "val_seen split size");
  gen->add_option("--val-unseen-episodes", f.ep_val_unseen, "val_unseen split size");

  CLI::App* tr = app.add_subcommand("train", "train the navigation agent");
  add_common(tr);
  add_data_flags(tr);
  add_train_flags(tr);
  tr->add_option("--out", f.out, "output directory");

  CLI::App* ev = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  add_common(ev);
  add_data_flags(ev);
  add_model_flags(ev);
  ev->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  ev->add_option("--split", f.split, "episode split")->default_val("val_unseen");
  ev->add_option("--out", f.out, "output directory");
  ev->add_option("--max-steps", f.max_steps, "per-episode step budget");
  ev->add_flag("--oracle", f.oracle, "score ground-truth rollouts (harness self-test)");

  CLI::App* ro = app.add_subcommand("rollout", "dump one episode's trajectory");
  add_common(ro);
  add_data_flags(ro);
  add_model_flags(ro);
  ro->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  ro->add_option("--split", f.split, "episode split")->default_val("train");
  ro->add_option("--episode", f.episode_id, "episode id (default: first in split)");
  ro->add_option("--max-steps", f.max_steps, "per-episode step budget");
  ro->add_flag("--oracle", f.oracle, "roll out the oracle policy");

  CLI::App* ab = app.add_subcommand("ablation", "train all architecture variants");
  add_common(ab);
  add_data_flags(ab);
  add_train_flags(ab);
  ab->add_option("--out", f.out, "output directory");

  CLI::App* sw = app.add_subcommand("sweep-filters", "train across filter-bank sizes");
  add_common(sw);
  add_data_flags(sw);
  add_train_flags(sw);
  sw->add_option("--out", f.out, "output directory");
  sw->add_option("--sweep", f.sweep_filters, "filter counts to sweep")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig rc = resolve_config(f);
    if (gen->parsed()) return cmd_gen_world(rc);
    if (tr->parsed()) return cmd_train(rc);
    if (ev->parsed()) return cmd_eval(rc, f.split, f.oracle);
    if (ro->parsed()) return cmd_rollout(rc, f.split, f.episode_id, f.oracle);
    if (ab->parsed()) return cmd_ablation(rc);
    if (sw->parsed()) return cmd_sweep(rc, f.sweep_filters);
    throw ConfigError("no subcommand given");
  } catch (const dcnav::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dcnav::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
