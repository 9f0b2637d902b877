#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gap/trajectory.hpp"

namespace gap::sim {

enum class TaskKind { translate, rotate };
enum class Dist { id, ood };
enum class Phase { approach, grasp, transport, rotate, place, done };

const char* phase_name(Phase p);

struct Rect {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

struct EnvConfig {
  TaskKind task = TaskKind::translate;
  int grid = 16;
  int max_steps = 80;
  double action_scale = 0.05;
  double grasp_radius = 0.05;
  double place_radius = 0.05;
  Rect object_spawn{0.55, 0.12, 0.85, 0.42};
  Rect ood_spawn{0.55, 0.52, 0.85, 0.82};
  std::array<double, 2> target{0.20, 0.78};
  std::array<double, 2> gripper_start{0.12, 0.12};
  double blob_sigma_cells = 1.0;  // soft-rendering radius, in cells
  // rotation-variant controller constants
  double waypoint_rise = 0.18;  // transport aims this far above the target
  double rotate_goal = 1.5707963267948966;
  double rotate_step = 0.5235987755982988;

  int pos_dim() const { return 2; }
  int theta_dim() const { return task == TaskKind::rotate ? 3 : 0; }
  int action_dim() const { return task == TaskKind::rotate ? 4 : 3; }
  int obs_dim() const { return 3 * grid * grid; }
  traj::Schema schema() const;

  static EnvConfig for_task(TaskKind t) {
    EnvConfig c;
    c.task = t;
    return c;
  }
  static EnvConfig for_task(const std::string& name);
};

struct EnvState {
  std::array<double, 2> p{0, 0};
  double theta = 0.0;
  double g = 1.0;
  std::array<double, 2> object{0, 0};
  bool held = false;
  int step = 0;
  Phase phase = Phase::approach;
  bool done = false;
  bool success = false;
};

struct Observation {
  std::vector<double> visual;  // 3 channels x grid x grid, flattened
  traj::ProprioState proprio;
};

// Channel layout: 0 = object, 1 = target, 2 = gripper; cell (ix, iy) at
// flat index ch*R*R + iy*R + ix.
std::vector<double> render(const EnvConfig& cfg, const EnvState& s);
int cell_index(const EnvConfig& cfg, double coord);

Observation observe(const EnvConfig& cfg, const EnvState& s);

std::pair<EnvState, Observation> reset(const EnvConfig& cfg, Dist dist,
                                       std::uint64_t seed);

struct StepResult {
  EnvState state;
  Observation obs;
  bool done = false;
  bool success = false;
};

StepResult step(const EnvConfig& cfg, const EnvState& s,
                const std::vector<double>& action);

std::vector<double> expert_policy(const EnvConfig& cfg, const EnvState& s);

// n successful expert rollouts from the in-distribution spawn region, with
// the expert's phase-switch steps recorded in each trajectory's meta.
traj::Dataset gen_demos(const EnvConfig& cfg, int n, std::uint64_t seed);

// Closed-loop action source; history handling lives behind this interface.
struct RolloutPolicy {
  virtual ~RolloutPolicy() = default;
  virtual void begin_episode() {}
  virtual std::vector<double> act(const Observation& obs, const EnvState& s) = 0;
};

struct ExpertRollout final : RolloutPolicy {
  explicit ExpertRollout(const EnvConfig& c) : cfg(c) {}
  std::vector<double> act(const Observation&, const EnvState& s) override {
    return expert_policy(cfg, s);
  }
  EnvConfig cfg;
};

struct EpisodeLog {
  std::uint64_t seed = 0;
  Dist dist = Dist::id;
  bool success = false;
  int steps = 0;
};

struct EvalResult {
  double success_rate = 0.0;
  std::vector<EpisodeLog> episodes;
};

EvalResult evaluate(const EnvConfig& cfg, RolloutPolicy& policy, int n_rollouts,
                    Dist dist, std::uint64_t seed);

// Base-policy rollouts with the alternate policy's actions executed inside
// [t0, t0 + width); one rollout set per window start on a stride grid.
struct InterventionResult {
  double baseline_rate = 0.0;
  int width = 10;
  std::vector<int> starts;
  std::vector<double> rate_per_start;
  // success_per_start[w][e] for window w, episode e
  std::vector<std::vector<std::uint8_t>> success_per_start;
  std::vector<std::vector<int>> transition_steps;  // per episode, from baseline
  std::vector<int> episode_length;                 // baseline lengths
};

InterventionResult intervention_experiment(const EnvConfig& cfg,
                                           RolloutPolicy& base,
                                           RolloutPolicy& alt, int width,
                                           int stride, int episodes,
                                           std::uint64_t seed);

struct InterventionSummary {
  double baseline = 0.0;
  double transition_rate = 0.0;  // windows overlapping a phase switch
  double consistent_rate = 0.0;  // remaining windows inside the episode
  double drop_transition = 0.0;
  double drop_consistent = 0.0;
};

InterventionSummary summarize(const InterventionResult& r);

}  // namespace gap::sim
