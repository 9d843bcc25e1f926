#include "dcnav/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "dcnav/util.hpp"

namespace dcnav {

namespace {
constexpr double kAngleEps = 1e-9;
constexpr double kDistEps = 1e-9;
}  // namespace

const char* action_name(Action a) {
  switch (a) {
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
    case Action::RaiseElevation: return "raise_elevation";
    case Action::LowerElevation: return "lower_elevation";
    case Action::GoAhead: return "go_ahead";
    case Action::EndEpisode: return "end_episode";
  }
  throw IndexError("action_name: bad action value");
}

Action action_from_name(const std::string& name) {
  for (int i = 0; i < kNumActions; ++i) {
    if (name == action_name(static_cast<Action>(i))) return static_cast<Action>(i);
  }
  throw ParseError("unknown action name: " + name);
}

NavGraph::NavGraph(NavGraph&& o) noexcept { *this = std::move(o); }

NavGraph& NavGraph::operator=(NavGraph&& o) noexcept {
  if (this == &o) return *this;
  std::lock_guard<std::mutex> lock(o.cache_mu_);
  nodes_ = std::move(o.nodes_);
  index_ = std::move(o.index_);
  adj_ = std::move(o.adj_);
  edges_ = std::move(o.edges_);
  feature_dim_ = o.feature_dim_;
  finalized_ = o.finalized_;
  dist_cache_ = std::move(o.dist_cache_);
  return *this;
}

size_t NavGraph::add_node(NavNode n) {
  if (finalized_) throw GraphError("add_node on finalized graph");
  if (n.id.empty()) throw GraphError("node id must be non-empty");
  if (index_.count(n.id)) throw GraphError("duplicate node id: " + n.id);
  if (!n.features.empty()) {
    if (n.features.size() % kGridCells != 0) {
      throw GraphError("node " + n.id + ": feature length not a multiple of " +
                       std::to_string(kGridCells));
    }
    size_t dim = n.features.size() / kGridCells;
    if (feature_dim_ == 0) {
      feature_dim_ = dim;
    } else if (dim != feature_dim_) {
      throw GraphError("node " + n.id + ": feature dim differs from the world's");
    }
    for (float v : n.features) {
      if (!std::isfinite(v)) throw GraphError("node " + n.id + ": non-finite feature");
    }
  }
  size_t idx = nodes_.size();
  index_.emplace(n.id, idx);
  nodes_.push_back(std::move(n));
  adj_.emplace_back();
  return idx;
}

void NavGraph::add_edge(size_t a, size_t b) {
  if (finalized_) throw GraphError("add_edge on finalized graph");
  if (a >= nodes_.size() || b >= nodes_.size()) {
    throw GraphError("edge endpoint does not exist");
  }
  if (a == b) throw GraphError("self-loop on node " + nodes_[a].id);
  auto key = std::minmax(a, b);
  if (edges_.count({key.first, key.second})) return;  // duplicate edge
  if (euclidean(a, b) <= 0.0) {
    throw GraphError("zero-length edge " + nodes_[a].id + " -- " + nodes_[b].id);
  }
  edges_.insert({key.first, key.second});
  adj_[a].push_back(b);
  adj_[b].push_back(a);
}

void NavGraph::add_edge(const std::string& a, const std::string& b) {
  add_edge(index_of(a), index_of(b));
}

void NavGraph::finalize() {
  if (nodes_.empty()) throw GraphError("graph has no nodes");
  for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
  // Connectivity via BFS from node 0.
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<size_t> queue{0};
  seen[0] = 1;
  size_t reached = 1;
  while (!queue.empty()) {
    size_t u = queue.back();
    queue.pop_back();
    for (size_t v : adj_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        queue.push_back(v);
      }
    }
  }
  if (reached != nodes_.size()) {
    std::ostringstream os;
    os << "graph is disconnected: reached " << reached << " of " << nodes_.size()
       << " nodes";
    throw GraphError(os.str());
  }
  dist_cache_.assign(nodes_.size(), nullptr);
  finalized_ = true;
}

size_t NavGraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw GraphError("unknown node id: " + id);
  return it->second;
}

double NavGraph::euclidean(size_t a, size_t b) const {
  const NavNode& na = nodes_.at(a);
  const NavNode& nb = nodes_.at(b);
  double dx = nb.x - na.x, dy = nb.y - na.y, dz = nb.z - na.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

const std::vector<double>& NavGraph::dist_row(size_t src) const {
  if (!finalized_) throw GraphError("geodesic query on non-finalized graph");
  if (src >= nodes_.size()) throw GraphError("unknown node index in geodesic query");
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    if (dist_cache_[src]) return *dist_cache_[src];
  }
  // Dijkstra with deterministic (distance, node) ordering.
  auto row = std::make_shared<std::vector<double>>(
      nodes_.size(), std::numeric_limits<double>::infinity());
  using Entry = std::pair<double, size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
  (*row)[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > (*row)[u]) continue;
    for (size_t v : adj_[u]) {
      double nd = d + euclidean(u, v);
      if (nd < (*row)[v]) {
        (*row)[v] = nd;
        pq.push({nd, v});
      }
    }
  }
  std::lock_guard<std::mutex> lock(cache_mu_);
  if (!dist_cache_[src]) dist_cache_[src] = std::move(row);
  return *dist_cache_[src];
}

double NavGraph::geodesic(size_t a, size_t b) const {
  if (a == b) {
    if (a >= nodes_.size()) throw GraphError("unknown node index in geodesic query");
    return 0.0;
  }
  return dist_row(a).at(b);
}

size_t NavGraph::next_hop(size_t from, size_t to) const {
  if (from == to) throw GraphError("next_hop: already at target");
  const std::vector<double>& to_target = dist_row(to);
  if (!std::isfinite(to_target.at(from))) {
    throw GraphError("next_hop: target unreachable");  // cannot happen when connected
  }
  // The neighbor on a shortest path satisfies d(from,to) == w(from,n) + d(n,to).
  // Neighbors are index-sorted, so ties resolve to the smallest index.
  double best = to_target[from];
  for (size_t n : adj_[from]) {
    if (std::abs(euclidean(from, n) + to_target[n] - best) <= kDistEps) return n;
  }
  throw GraphError("next_hop: no neighbor advances toward target");
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  else if (a > kPi) a -= 2.0 * kPi;
  return a;
}

double heading_angle(int heading_bin) { return heading_bin * kHeadingStepRad; }

double elev_angle(int elev_bin) { return elev_bin * kElevStepRad; }

void validate_pose(const NavGraph& g, const AgentPose& pose) {
  if (pose.node >= g.size()) throw GraphError("pose node does not exist");
  if (pose.heading_bin < 0 || pose.heading_bin >= kHeadingBins) {
    throw IndexError("pose heading_bin out of range");
  }
  if (pose.elev_bin < -1 || pose.elev_bin > 1) {
    throw IndexError("pose elev_bin out of range");
  }
}

void relative_angles(const NavGraph& g, const AgentPose& pose, size_t target,
                     double& d_heading, double& d_elev) {
  const NavNode& a = g.node(pose.node);
  const NavNode& t = g.node(target);
  double dx = t.x - a.x, dy = t.y - a.y, dz = t.z - a.z;
  double planar = std::sqrt(dx * dx + dy * dy);
  // Heading measured clockwise from +y, hence atan2(dx, dy).
  d_heading = wrap_angle(std::atan2(dx, dy) - heading_angle(pose.heading_bin));
  d_elev = std::atan2(dz, planar) - elev_angle(pose.elev_bin);
}

std::vector<ForwardCandidate> forward_candidates(const NavGraph& g,
                                                 const AgentPose& pose) {
  validate_pose(g, pose);
  std::vector<ForwardCandidate> out;
  for (size_t n : g.neighbors(pose.node)) {
    ForwardCandidate c;
    c.node = n;
    relative_angles(g, pose, n, c.d_heading, c.d_elev);
    c.dist = g.euclidean(pose.node, n);
    if (std::abs(c.d_heading) <= kForwardHeadingConeRad + kAngleEps &&
        std::abs(c.d_elev) <= kForwardElevConeRad + kAngleEps) {
      out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end(),
            [&g](const ForwardCandidate& a, const ForwardCandidate& b) {
              double aa = std::abs(a.d_heading), ab = std::abs(b.d_heading);
              if (std::abs(aa - ab) > kAngleEps) return aa < ab;
              if (std::abs(a.dist - b.dist) > kDistEps) return a.dist < b.dist;
              return g.node(a.node).id < g.node(b.node).id;
            });
  return out;
}

StepOutcome apply_action(const NavGraph& g, const AgentPose& pose, Action a) {
  validate_pose(g, pose);
  StepOutcome out;
  out.pose = pose;
  switch (a) {
    case Action::TurnLeft:
      out.pose.heading_bin = (pose.heading_bin + kHeadingBins - 1) % kHeadingBins;
      out.moved = true;
      break;
    case Action::TurnRight:
      out.pose.heading_bin = (pose.heading_bin + 1) % kHeadingBins;
      out.moved = true;
      break;
    case Action::RaiseElevation:
      if (pose.elev_bin < 1) {
        out.pose.elev_bin = pose.elev_bin + 1;
        out.moved = true;
      }
      break;
    case Action::LowerElevation:
      if (pose.elev_bin > -1) {
        out.pose.elev_bin = pose.elev_bin - 1;
        out.moved = true;
      }
      break;
    case Action::GoAhead: {
      auto cands = forward_candidates(g, pose);
      if (cands.empty()) {
        out.forward_failed = true;
      } else {
        out.pose.node = cands.front().node;  // heading/elevation preserved
        out.moved = true;
      }
      break;
    }
    case Action::EndEpisode:
      out.done = true;
      break;
  }
  return out;
}

Action oracle_action(const NavGraph& g, const AgentPose& pose,
                     const std::vector<size_t>& gt_path, size_t progress) {
  validate_pose(g, pose);
  if (progress >= gt_path.size() || gt_path[progress] != pose.node) {
    std::ostringstream os;
    os << "oracle desync: pose at node "
       << (pose.node < g.size() ? g.node(pose.node).id : "?") << ", path progress "
       << progress << "/" << gt_path.size();
    throw OracleDesyncError(os.str());
  }
  if (progress + 1 == gt_path.size()) return Action::EndEpisode;
  size_t target = gt_path[progress + 1];
  double d_heading, d_elev;
  relative_angles(g, pose, target, d_heading, d_elev);
  // Elevation first: align the viewing row before committing to a move.
  if (d_elev > kForwardElevConeRad + kAngleEps) return Action::RaiseElevation;
  if (d_elev < -kForwardElevConeRad - kAngleEps) return Action::LowerElevation;
  if (std::abs(d_heading) <= kForwardHeadingConeRad + kAngleEps) {
    auto cands = forward_candidates(g, pose);
    if (!cands.empty() && cands.front().node == target) return Action::GoAhead;
  }
  // Positive relative heading (clockwise, including the exact-180 wrap to +pi)
  // takes fewer right turns; negative takes fewer left turns.
  return d_heading >= 0.0 ? Action::TurnRight : Action::TurnLeft;
}

void validate_episode(const NavGraph& g, const Episode& ep) {
  if (ep.path.empty()) throw GraphError("episode " + ep.id + ": empty path");
  if (ep.start_heading_bin < 0 || ep.start_heading_bin >= kHeadingBins) {
    throw IndexError("episode " + ep.id + ": start heading bin out of range");
  }
  for (size_t i = 0; i < ep.path.size(); ++i) {
    if (ep.path[i] >= g.size()) {
      throw GraphError("episode " + ep.id + ": unknown node index in path");
    }
    if (i > 0) {
      auto key = std::minmax(ep.path[i - 1], ep.path[i]);
      if (!g.edges().count({key.first, key.second})) {
        throw GraphError("episode " + ep.id + ": consecutive path nodes " +
                         g.node(ep.path[i - 1]).id + " and " + g.node(ep.path[i]).id +
                         " are not adjacent");
      }
    }
  }
}

EpisodeRecord run_oracle_rollout(const NavGraph& g, const Episode& ep) {
  validate_episode(g, ep);
  EpisodeRecord rec;
  rec.episode_id = ep.id;
  AgentPose pose{ep.path.front(), ep.start_heading_bin, 0};
  rec.poses.push_back(pose);
  size_t progress = 0;
  // Upper bound: per path hop at most 6 turns + 1 elevation fix + 1 move,
  // plus the final end. Anything past that is a logic error, not a long path.
  size_t budget = ep.path.size() * (kHeadingBins + 2) + 2;
  for (size_t step = 0; step <= budget; ++step) {
    Action a = oracle_action(g, pose, ep.path, progress);
    StepOutcome outcome = apply_action(g, pose, a);
    rec.actions.push_back(a);
    if (a == Action::GoAhead) {
      if (!outcome.moved || outcome.pose.node != ep.path[progress + 1]) {
        throw OracleDesyncError("oracle go-ahead did not reach the path node in episode " +
                                ep.id);
      }
      rec.traveled_m += g.euclidean(pose.node, outcome.pose.node);
      ++progress;
    }
    pose = outcome.pose;
    rec.poses.push_back(pose);
    if (outcome.done) return rec;
  }
  throw OracleDesyncError("oracle rollout exceeded its action budget in episode " +
                          ep.id);
}

NavGraph NavGraph::load_json(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges")) {
    throw ParseError(path + ": expected an object with nodes and edges");
  }
  NavGraph g;
  try {
    for (const auto& jn : doc.at("nodes")) {
      NavNode n;
      n.id = jn.at("id").get<std::string>();
      const auto& pos = jn.at("pos");
      if (!pos.is_array() || pos.size() != 3) {
        throw ParseError("node " + n.id + ": pos must be [x, y, z]");
      }
      n.x = pos[0].get<double>();
      n.y = pos[1].get<double>();
      n.z = pos[2].get<double>();
      if (jn.contains("features")) {
        std::string bytes = base64_decode(jn.at("features").get<std::string>());
        if (bytes.size() % 4 != 0) {
          throw ParseError("node " + n.id + ": feature payload not f32-aligned");
        }
        n.features.resize(bytes.size() / 4);
        std::memcpy(n.features.data(), bytes.data(), bytes.size());
      }
      g.add_node(std::move(n));
    }
    for (const auto& je : doc.at("edges")) {
      if (!je.is_array() || je.size() != 2) {
        throw ParseError("edge entries must be [id, id] pairs");
      }
      g.add_edge(je[0].get<std::string>(), je[1].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  g.finalize();
  return g;
}

}  // namespace dcnav
