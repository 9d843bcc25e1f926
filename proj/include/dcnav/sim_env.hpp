#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcnav/error.hpp"

namespace dcnav {

inline constexpr int kHeadingBins = 12;
inline constexpr int kElevBins = 3;  // rows: bottom (-1), mid (0), top (+1)
inline constexpr int kGridCells = kHeadingBins * kElevBins;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHeadingStepRad = 2.0 * kPi / kHeadingBins;  // 30 deg
inline constexpr double kElevStepRad = kPi / 6.0;                    // 30 deg
// Forward-motion eligibility cone: half a heading bin, one and a half
// elevation steps.
inline constexpr double kForwardHeadingConeRad = kPi / 12.0;  // 15 deg
inline constexpr double kForwardElevConeRad = kPi / 4.0;      // 45 deg

// The six low-level actions. The index order is frozen: it defines the
// policy head layout and checkpoint compatibility.
enum class Action : int {
  TurnLeft = 0,
  TurnRight = 1,
  RaiseElevation = 2,
  LowerElevation = 3,
  GoAhead = 4,
  EndEpisode = 5,
};
inline constexpr int kNumActions = 6;

const char* action_name(Action a);
Action action_from_name(const std::string& name);

struct NavNode {
  std::string id;
  double x = 0.0, y = 0.0, z = 0.0;
  // Raw visual features, layout [heading_bin][elev_row][dim] with elev row
  // order bottom/mid/top; empty when the graph carries no imagery.
  std::vector<float> features;
};

// Undirected navigation graph with Euclidean edge weights and a lazily
// filled per-source geodesic cache (compute-once under a mutex, so
// concurrent readers are safe).
class NavGraph {
 public:
  NavGraph() = default;
  NavGraph(NavGraph&& o) noexcept;
  NavGraph& operator=(NavGraph&& o) noexcept;
  NavGraph(const NavGraph&) = delete;
  NavGraph& operator=(const NavGraph&) = delete;

  size_t add_node(NavNode n);
  void add_edge(size_t a, size_t b);
  void add_edge(const std::string& a, const std::string& b);
  // Validates connectivity and edge invariants; call after construction.
  void finalize();

  size_t size() const { return nodes_.size(); }
  size_t edge_count() const { return edges_.size(); }
  bool finalized() const { return finalized_; }
  const NavNode& node(size_t i) const { return nodes_.at(i); }
  bool has_node(const std::string& id) const { return index_.count(id) != 0; }
  size_t index_of(const std::string& id) const;
  const std::vector<size_t>& neighbors(size_t i) const { return adj_.at(i); }
  const std::set<std::pair<size_t, size_t>>& edges() const { return edges_; }
  size_t feature_dim() const { return feature_dim_; }

  double euclidean(size_t a, size_t b) const;
  // Shortest-path length along the graph in meters.
  double geodesic(size_t a, size_t b) const;
  // First node after `from` on the deterministic shortest path to `to`.
  size_t next_hop(size_t from, size_t to) const;

  static NavGraph load_json(const std::string& path);

 private:
  const std::vector<double>& dist_row(size_t src) const;

  std::vector<NavNode> nodes_;
  std::unordered_map<std::string, size_t> index_;
  std::vector<std::vector<size_t>> adj_;
  std::set<std::pair<size_t, size_t>> edges_;  // normalized (min, max)
  size_t feature_dim_ = 0;
  bool finalized_ = false;

  mutable std::mutex cache_mu_;
  mutable std::vector<std::shared_ptr<const std::vector<double>>> dist_cache_;
};

// Agent pose: graph node + discretized orientation. Heading angle is
// heading_bin * 30 deg measured clockwise from world +y; elevation angle is
// elev_bin * 30 deg.
struct AgentPose {
  size_t node = 0;
  int heading_bin = 0;  // 0..11
  int elev_bin = 0;     // -1, 0, +1

  bool operator==(const AgentPose& o) const = default;
};

struct StepOutcome {
  AgentPose pose;
  bool moved = false;           // pose changed
  bool done = false;            // end-episode emitted
  bool forward_failed = false;  // go-ahead with no eligible neighbor
};

struct ForwardCandidate {
  size_t node = 0;
  double d_heading = 0.0;  // radians, in (-pi, pi]
  double d_elev = 0.0;     // radians
  double dist = 0.0;       // Euclidean meters
};

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);
double heading_angle(int heading_bin);
double elev_angle(int elev_bin);
void validate_pose(const NavGraph& g, const AgentPose& pose);

// Relative heading/elevation of a neighbor as seen from the pose.
void relative_angles(const NavGraph& g, const AgentPose& pose, size_t target,
                     double& d_heading, double& d_elev);

// Eligible go-ahead targets, sorted by |d_heading|, then distance, then id.
std::vector<ForwardCandidate> forward_candidates(const NavGraph& g,
                                                 const AgentPose& pose);

StepOutcome apply_action(const NavGraph& g, const AgentPose& pose, Action a);

// Ground-truth action toward gt_path[progress + 1] (end at the last index).
// Requires gt_path[progress] == pose.node.
Action oracle_action(const NavGraph& g, const AgentPose& pose,
                     const std::vector<size_t>& gt_path, size_t progress);

struct Episode {
  std::string id;
  std::vector<size_t> path;  // node indices, consecutive entries adjacent
  int start_heading_bin = 0;
  std::string instruction;
  std::string split;
};

struct EpisodeRecord {
  std::string episode_id;
  std::vector<Action> actions;
  std::vector<AgentPose> poses;  // length = actions.size() + 1; front = start
  double traveled_m = 0.0;       // translation only
  bool truncated = false;        // step budget reached before end-episode
};

EpisodeRecord run_oracle_rollout(const NavGraph& g, const Episode& ep);

void validate_episode(const NavGraph& g, const Episode& ep);

}  // namespace dcnav
