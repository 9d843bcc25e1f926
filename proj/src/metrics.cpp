#include "dcnav/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dcnav {

EpisodeScore score_episode(const NavGraph& g, const EpisodeRecord& record,
                           size_t goal, double threshold_m) {
  if (goal >= g.size()) throw GraphError("score_episode: goal node does not exist");
  if (record.poses.empty()) throw GraphError("score_episode: empty pose sequence");
  EpisodeScore s;
  size_t start = record.poses.front().node;
  size_t final = record.poses.back().node;
  s.ne_m = g.geodesic(final, goal);
  s.ne_euclid_m = g.euclidean(final, goal);
  s.success = s.ne_m <= threshold_m;

  double closest = s.ne_m;
  double traveled = 0.0;
  for (size_t i = 0; i < record.poses.size(); ++i) {
    closest = std::min(closest, g.geodesic(record.poses[i].node, goal));
    if (i > 0 && record.poses[i].node != record.poses[i - 1].node) {
      traveled += g.euclidean(record.poses[i - 1].node, record.poses[i].node);
    }
  }
  s.oracle_success = closest <= threshold_m;
  s.path_length_m = traveled;
  s.shortest_length_m = g.geodesic(start, goal);
  if (!s.success) {
    s.spl = 0.0;
  } else if (s.shortest_length_m == 0.0) {
    // Start == goal: l/max(p, l) is 0/0; success alone decides.
    s.spl = 1.0;
  } else {
    s.spl = s.shortest_length_m / std::max(s.path_length_m, s.shortest_length_m);
  }
  return s;
}

SplitScore score_split(const NavGraph& g, const std::vector<EpisodeRecord>& records,
                       const std::vector<size_t>& goals, double threshold_m) {
  if (records.size() != goals.size()) {
    throw ConfigError("score_split: record and goal counts differ");
  }
  if (records.empty()) throw ConfigError("score_split: empty split");
  SplitScore agg;
  agg.n = records.size();
  for (size_t i = 0; i < records.size(); ++i) {
    EpisodeScore s = score_episode(g, records[i], goals[i], threshold_m);
    agg.ne += s.ne_m;
    agg.sr += s.success ? 1.0 : 0.0;
    agg.osr += s.oracle_success ? 1.0 : 0.0;
    agg.spl += s.spl;
  }
  agg.ne /= static_cast<double>(agg.n);
  agg.sr /= static_cast<double>(agg.n);
  agg.osr /= static_cast<double>(agg.n);
  agg.spl /= static_cast<double>(agg.n);
  return agg;
}

}  // namespace dcnav
