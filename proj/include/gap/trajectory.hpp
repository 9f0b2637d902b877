#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gap/errors.hpp"

namespace gap::traj {

// One timestep of the robot's internal state: gripper position (2-D or 3-D),
// optional orientation (empty or 3-vector), and opening degree in [0, 1].
struct ProprioState {
  std::vector<double> p;
  std::vector<double> theta;
  double g = 1.0;

  bool operator==(const ProprioState&) const = default;
};

// Change between two timesteps.  Orientation delta is empty when the
// trajectory carries no orientation.
struct Motion {
  std::vector<double> dp;
  std::vector<double> dtheta;
  double dg = 0.0;

  bool operator==(const Motion&) const = default;
};

Motion operator+(const Motion& a, const Motion& b);

struct TrajMeta {
  std::uint64_t seed = 0;
  std::string task;
  std::string dist;             // "id" or "ood"
  std::vector<int> transitions; // recorded ground-truth phase starts

  bool operator==(const TrajMeta&) const = default;
};

struct Trajectory {
  std::vector<ProprioState> states;
  std::vector<std::vector<double>> actions;
  std::vector<std::vector<double>> obs;
  TrajMeta meta;

  int length() const { return static_cast<int>(states.size()); }

  bool operator==(const Trajectory&) const = default;
};

struct Schema {
  int pos_dim = 2;
  int theta_dim = 0;
  int action_dim = 0;
  int obs_dim = 0;

  bool operator==(const Schema&) const = default;
};

struct Dataset {
  Schema schema;
  std::vector<Trajectory> trajectories;

  bool operator==(const Dataset&) const = default;
};

// dp = p_j - p_i, dtheta = theta_j - theta_i, dg = g_j - g_i.
Motion motion_between(const Trajectory& t, int i, int j);

// Adjacent deltas [m(0,1), m(1,2), ...]; length N-1.
std::vector<Motion> delta_sequence(const Trajectory& t);

// Throws ArgumentError when a trajectory violates the schema or its own
// invariants (lengths equal, N >= 2, g in [0,1]).
void validate(const Dataset& ds);

// Line-delimited JSON: header record, then per trajectory one meta record
// followed by one record per timestep.  Round trips bit-exactly.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace gap::traj
