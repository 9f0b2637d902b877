#pragma once

#include <vector>

#include "gap/nn/rng.hpp"
#include "gap/trajectory.hpp"

namespace gap::testutil {

// Random trajectory with continuous states; g stays inside [0,1].
inline traj::Trajectory random_trajectory(nn::Rng& rng, int n, int pos_dim,
                                          int theta_dim, int action_dim = 3,
                                          int obs_dim = 4) {
  traj::Trajectory t;
  traj::ProprioState s;
  s.p.assign(static_cast<std::size_t>(pos_dim), 0.0);
  s.theta.assign(static_cast<std::size_t>(theta_dim), 0.0);
  for (double& v : s.p) v = rng.uniform(0.2, 0.8);
  for (double& v : s.theta) v = rng.uniform(-1.0, 1.0);
  s.g = rng.uniform(0.1, 0.9);
  for (int i = 0; i < n; ++i) {
    t.states.push_back(s);
    std::vector<double> a(static_cast<std::size_t>(action_dim));
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    t.actions.push_back(a);
    std::vector<double> o(static_cast<std::size_t>(obs_dim));
    for (double& v : o) v = rng.uniform(0.0, 1.0);
    t.obs.push_back(o);
    for (double& v : s.p) v += rng.uniform(-0.05, 0.05);
    for (double& v : s.theta) v += rng.uniform(-0.1, 0.1);
    s.g = std::clamp(s.g + rng.uniform(-0.08, 0.08), 0.0, 1.0);
  }
  return t;
}

inline traj::Dataset random_dataset(nn::Rng& rng, int n_traj, int max_len,
                                    int pos_dim = 2, int theta_dim = 0) {
  traj::Dataset ds;
  ds.schema = {pos_dim, theta_dim, 3, 4};
  for (int i = 0; i < n_traj; ++i) {
    const int n = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_len - 1)));
    ds.trajectories.push_back(random_trajectory(rng, n, pos_dim, theta_dim));
    ds.trajectories.back().meta.seed = rng.next_u64();
    ds.trajectories.back().meta.task = "synthetic";
    ds.trajectories.back().meta.dist = "id";
  }
  return ds;
}

// Piecewise-constant-velocity trajectory through the given waypoint segments.
struct Segment {
  std::vector<double> velocity;
  double dg_per_step;
  int steps;
};

inline traj::Trajectory piecewise_trajectory(const std::vector<Segment>& segs,
                                             double g0 = 0.5) {
  traj::Trajectory t;
  traj::ProprioState s;
  s.p.assign(segs[0].velocity.size(), 0.5);
  s.g = g0;
  auto push = [&] {
    t.states.push_back(s);
    t.actions.push_back(std::vector<double>(s.p.size() + 1, 0.0));
    t.obs.push_back({0.0});
  };
  push();
  for (const Segment& seg : segs)
    for (int i = 0; i < seg.steps; ++i) {
      for (std::size_t k = 0; k < s.p.size(); ++k) s.p[k] += seg.velocity[k];
      s.g = std::clamp(s.g + seg.dg_per_step, 0.0, 1.0);
      push();
    }
  return t;
}

}  // namespace gap::testutil
