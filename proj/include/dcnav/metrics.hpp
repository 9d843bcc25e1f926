#pragma once

#include <vector>

#include "dcnav/sim_env.hpp"

namespace dcnav {

inline constexpr double kSuccessThresholdM = 3.0;

struct EpisodeScore {
  double ne_m = 0.0;         // geodesic(final node, goal)
  double ne_euclid_m = 0.0;  // straight-line, for diagnostics
  bool success = false;
  bool oracle_success = false;
  double spl = 0.0;
  double path_length_m = 0.0;      // translation only
  double shortest_length_m = 0.0;  // geodesic(start, goal)
};

struct SplitScore {
  double ne = 0.0;
  double sr = 0.0;
  double osr = 0.0;
  double spl = 0.0;
  size_t n = 0;
};

EpisodeScore score_episode(const NavGraph& g, const EpisodeRecord& record,
                           size_t goal, double threshold_m = kSuccessThresholdM);

SplitScore score_split(const NavGraph& g, const std::vector<EpisodeRecord>& records,
                       const std::vector<size_t>& goals,
                       double threshold_m = kSuccessThresholdM);

}  // namespace dcnav
