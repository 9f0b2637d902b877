#include "gap/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "gap/nn/rng.hpp"

namespace gap::sim {

namespace {

double dist2d(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

std::array<double, 2> unit_towards(const std::array<double, 2>& from,
                                   const std::array<double, 2>& to) {
  const double d = dist2d(from, to);
  if (d == 0.0) return {0.0, 0.0};
  return {(to[0] - from[0]) / d, (to[1] - from[1]) / d};
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Expert stop distances; both leave room for the place-phase retreat to keep
// the released object inside place_radius.
constexpr double kApproachStopFactor = 0.9;
constexpr double kPlaceStop = 0.03;
constexpr double kRetreatGain = 0.15;  // |dp| during place, well below a full step
constexpr double kCloseStep = -0.6;
constexpr double kOpenStepFirst = 0.08;  // stays below the release threshold
constexpr double kOpenStepFull = 0.30;   // crosses it on the next step
constexpr double kClosedLevel = 0.4;  // g after the single closing step

std::array<double, 2> waypoint_of(const EnvConfig& cfg) {
  return {cfg.target[0], cfg.target[1] + cfg.waypoint_rise};
}

Phase phase_of(const EnvConfig& cfg, const EnvState& s) {
  if (s.done) return Phase::done;
  if (!s.held) {
    if (s.g < 0.5) return Phase::grasp;  // closing (or closed next to nothing)
    return dist2d(s.p, s.object) > cfg.grasp_radius * kApproachStopFactor
               ? Phase::approach
               : Phase::grasp;
  }
  // Once the held gripper starts opening it stays in the place phase even
  // as the retreat carries it back out of the stop radius.
  const bool opening = s.g > kClosedLevel + 0.01;
  if (cfg.task == TaskKind::rotate) {
    if (opening) return Phase::place;
    const bool descending =
        s.theta > 0.0 || dist2d(s.p, waypoint_of(cfg)) <= kPlaceStop;
    if (!descending) return Phase::transport;
    return dist2d(s.p, cfg.target) > kPlaceStop ? Phase::rotate : Phase::place;
  }
  if (opening) return Phase::place;
  return dist2d(s.p, cfg.target) > kPlaceStop ? Phase::transport : Phase::place;
}

}  // namespace

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::approach: return "approach";
    case Phase::grasp: return "grasp";
    case Phase::transport: return "transport";
    case Phase::rotate: return "rotate";
    case Phase::place: return "place";
    case Phase::done: return "done";
  }
  return "done";
}

traj::Schema EnvConfig::schema() const {
  traj::Schema s;
  s.pos_dim = pos_dim();
  s.theta_dim = theta_dim();
  s.action_dim = action_dim();
  s.obs_dim = obs_dim();
  return s;
}

EnvConfig EnvConfig::for_task(const std::string& name) {
  if (name == "translate") return for_task(TaskKind::translate);
  if (name == "rotate") return for_task(TaskKind::rotate);
  throw ArgumentError("unknown task: " + name);
}

int cell_index(const EnvConfig& cfg, double coord) {
  const int r = cfg.grid;
  int i = static_cast<int>(std::floor(coord * r));
  return std::clamp(i, 0, r - 1);
}

std::vector<double> render(const EnvConfig& cfg, const EnvState& s) {
  const int r = cfg.grid;
  std::vector<double> v(static_cast<std::size_t>(3 * r * r), 0.0);
  const double sigma = cfg.blob_sigma_cells;
  const double cutoff = 3.0 * sigma;
  auto splat = [&](int channel, const std::array<double, 2>& pos, double gain) {
    const double cx = pos[0] * r;  // in cell units
    const double cy = pos[1] * r;
    const int ix0 = std::max(0, static_cast<int>(std::floor(cx - cutoff - 0.5)));
    const int ix1 = std::min(r - 1, static_cast<int>(std::ceil(cx + cutoff - 0.5)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(cy - cutoff - 0.5)));
    const int iy1 = std::min(r - 1, static_cast<int>(std::ceil(cy + cutoff - 0.5)));
    for (int iy = iy0; iy <= iy1; ++iy)
      for (int ix = ix0; ix <= ix1; ++ix) {
        const double dx = cx - (ix + 0.5);
        const double dy = cy - (iy + 0.5);
        const double d2 = dx * dx + dy * dy;
        if (d2 > cutoff * cutoff) continue;
        v[static_cast<std::size_t>(channel * r * r + iy * r + ix)] =
            gain * std::exp(-d2 / (2.0 * sigma * sigma));
      }
  };
  splat(0, s.object, 1.0);
  splat(1, cfg.target, 1.0);
  // The gripper draws dimmer as it closes; the opening state is visible in
  // pixels just as it is in real images.
  splat(2, s.p, 0.35 + 0.65 * s.g);
  return v;
}

Observation observe(const EnvConfig& cfg, const EnvState& s) {
  Observation o;
  o.visual = render(cfg, s);
  o.proprio.p = {s.p[0], s.p[1]};
  if (cfg.theta_dim() > 0) o.proprio.theta = {s.theta, 0.0, 0.0};
  o.proprio.g = s.g;
  return o;
}

std::pair<EnvState, Observation> reset(const EnvConfig& cfg, Dist dist,
                                       std::uint64_t seed) {
  nn::Rng rng(seed);
  const Rect& spawn = dist == Dist::id ? cfg.object_spawn : cfg.ood_spawn;
  EnvState s;
  s.p = cfg.gripper_start;
  s.g = 1.0;
  s.object = {rng.uniform(spawn.x0, spawn.x1), rng.uniform(spawn.y0, spawn.y1)};
  s.phase = phase_of(cfg, s);
  return {s, observe(cfg, s)};
}

StepResult step(const EnvConfig& cfg, const EnvState& prev,
                const std::vector<double>& action) {
  if (static_cast<int>(action.size()) != cfg.action_dim())
    throw ArgumentError("step: action dimension mismatch");
  for (const double a : action)
    if (!std::isfinite(a)) throw ArgumentError("step: non-finite action");

  StepResult out;
  out.state = prev;
  EnvState& s = out.state;
  if (!prev.done) {
    const double g_before = s.g;
    s.p[0] = clamp01(s.p[0] + cfg.action_scale * action[0]);
    s.p[1] = clamp01(s.p[1] + cfg.action_scale * action[1]);
    if (cfg.task == TaskKind::rotate) s.theta += action[2];
    s.g = clamp01(s.g + action.back());
    if (s.held) s.object = s.p;
    if (!s.held && g_before >= 0.5 && s.g < 0.5 &&
        dist2d(s.p, s.object) <= cfg.grasp_radius) {
      s.held = true;
      s.object = s.p;
    } else if (s.held && g_before < 0.5 && s.g >= 0.5) {
      s.held = false;
      if (dist2d(s.object, cfg.target) <= cfg.place_radius) s.success = true;
    }
    s.step += 1;
    s.done = s.success || s.step >= cfg.max_steps;
    s.phase = phase_of(cfg, s);
  }
  out.obs = observe(cfg, s);
  out.done = s.done;
  out.success = s.success;
  return out;
}

std::vector<double> expert_policy(const EnvConfig& cfg, const EnvState& s) {
  std::vector<double> a(static_cast<std::size_t>(cfg.action_dim()), 0.0);
  double& dg = a.back();
  auto set_dp = [&](std::array<double, 2> dir, double gain) {
    a[0] = dir[0] * gain;
    a[1] = dir[1] * gain;
  };
  auto move_to = [&](const std::array<double, 2>& goal) {
    const double d = dist2d(s.p, goal);
    const double gain = std::min(1.0, d / cfg.action_scale);
    set_dp(unit_towards(s.p, goal), gain);
  };

  switch (phase_of(cfg, s)) {
    case Phase::approach:
      // Full-magnitude steps only; the stop radius absorbs the overshoot, so
      // step length never leaks the distance to the object into proprio.
      set_dp(unit_towards(s.p, s.object), 1.0);
      break;
    case Phase::grasp:
      if (s.g >= 0.5)
        dg = kCloseStep;
      else
        dg = 0.25;  // recovery only; the expert never closes off-target
      break;
    case Phase::transport:
      move_to(cfg.task == TaskKind::rotate ? waypoint_of(cfg) : cfg.target);
      break;
    case Phase::rotate: {
      move_to(cfg.target);
      a[2] = std::min(cfg.rotate_step, std::max(0.0, cfg.rotate_goal - s.theta));
      break;
    }
    case Phase::place: {
      // Open while retreating; scale-free reversal of the incoming direction.
      const std::array<double, 2> back =
          cfg.task == TaskKind::rotate
              ? std::array<double, 2>{0.0, 1.0}
              : unit_towards(cfg.target, cfg.gripper_start);
      set_dp(back, kRetreatGain);
      dg = s.g <= kClosedLevel + 0.02 ? kOpenStepFirst : kOpenStepFull;
      break;
    }
    case Phase::done:
      break;
  }
  return a;
}

traj::Dataset gen_demos(const EnvConfig& cfg, int n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("gen_demos: n must be >= 1");
  traj::Dataset ds;
  ds.schema = cfg.schema();
  nn::Rng root(seed);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t ep_seed = root.derive(static_cast<std::uint64_t>(i)).seed();
    auto [state, obs] = reset(cfg, Dist::id, ep_seed);
    traj::Trajectory t;
    t.meta.seed = ep_seed;
    t.meta.task = cfg.task == TaskKind::rotate ? "rotate" : "translate";
    t.meta.dist = "id";
    Phase prev_phase = phase_of(cfg, state);
    while (!state.done) {
      const Phase acting = phase_of(cfg, state);
      if (acting != prev_phase) {
        t.meta.transitions.push_back(t.length());
        prev_phase = acting;
      }
      const std::vector<double> a = expert_policy(cfg, state);
      t.states.push_back(obs.proprio);
      t.obs.push_back(obs.visual);
      t.actions.push_back(a);
      StepResult r = step(cfg, state, a);
      state = r.state;
      obs = std::move(r.obs);
    }
    if (!state.success)
      throw std::runtime_error("gen_demos: expert failed on seed " +
                               std::to_string(ep_seed) + " (internal)");
    t.states.push_back(obs.proprio);
    t.obs.push_back(obs.visual);
    t.actions.push_back(std::vector<double>(
        static_cast<std::size_t>(cfg.action_dim()), 0.0));
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

EvalResult evaluate(const EnvConfig& cfg, RolloutPolicy& policy, int n_rollouts,
                    Dist dist, std::uint64_t seed) {
  if (n_rollouts < 1) throw ArgumentError("evaluate: n_rollouts must be >= 1");
  EvalResult res;
  nn::Rng root(seed);
  int wins = 0;
  for (int i = 0; i < n_rollouts; ++i) {
    const std::uint64_t ep_seed = root.derive(static_cast<std::uint64_t>(i)).seed();
    auto [state, obs] = reset(cfg, dist, ep_seed);
    policy.begin_episode();
    while (!state.done) {
      StepResult r = step(cfg, state, policy.act(obs, state));
      state = r.state;
      obs = std::move(r.obs);
    }
    wins += state.success ? 1 : 0;
    res.episodes.push_back({ep_seed, dist, state.success, state.step});
  }
  res.success_rate = static_cast<double>(wins) / static_cast<double>(n_rollouts);
  return res;
}

InterventionResult intervention_experiment(const EnvConfig& cfg,
                                           RolloutPolicy& base,
                                           RolloutPolicy& alt, int width,
                                           int stride, int episodes,
                                           std::uint64_t seed) {
  if (width < 1 || stride < 1 || episodes < 1)
    throw ArgumentError("intervention_experiment: bad width/stride/episodes");
  InterventionResult res;
  res.width = width;
  for (int t0 = 0; t0 < cfg.max_steps; t0 += stride) res.starts.push_back(t0);
  res.success_per_start.assign(res.starts.size(), {});

  nn::Rng root(seed);
  int base_wins = 0;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t ep_seed = root.derive(static_cast<std::uint64_t>(e)).seed();

    // Unintervened baseline; records the phase-switch steps.
    {
      auto [state, obs] = reset(cfg, Dist::id, ep_seed);
      base.begin_episode();
      Phase prev = state.phase;
      std::vector<int> switches;
      while (!state.done) {
        StepResult r = step(cfg, state, base.act(obs, state));
        state = r.state;
        obs = std::move(r.obs);
        if (state.phase != prev && state.phase != Phase::done) {
          switches.push_back(state.step);
          prev = state.phase;
        }
      }
      base_wins += state.success ? 1 : 0;
      res.transition_steps.push_back(std::move(switches));
      res.episode_length.push_back(state.step);
    }

    for (std::size_t w = 0; w < res.starts.size(); ++w) {
      const int t0 = res.starts[w];
      auto [state, obs] = reset(cfg, Dist::id, ep_seed);
      base.begin_episode();
      alt.begin_episode();
      while (!state.done) {
        // Both policies track the executed observation stream.
        const std::vector<double> a_base = base.act(obs, state);
        const std::vector<double> a_alt = alt.act(obs, state);
        const bool in_window = state.step >= t0 && state.step < t0 + width;
        StepResult r = step(cfg, state, in_window ? a_alt : a_base);
        state = r.state;
        obs = std::move(r.obs);
      }
      res.success_per_start[w].push_back(state.success ? 1 : 0);
    }
  }
  res.baseline_rate = static_cast<double>(base_wins) / episodes;
  res.rate_per_start.resize(res.starts.size());
  for (std::size_t w = 0; w < res.starts.size(); ++w) {
    long s = 0;
    for (const auto v : res.success_per_start[w]) s += v;
    res.rate_per_start[w] = static_cast<double>(s) / episodes;
  }
  return res;
}

InterventionSummary summarize(const InterventionResult& r) {
  // Classify per (episode, window): a window counts as transition if it
  // overlaps a recorded phase switch of that episode's baseline rollout.
  // Windows past the baseline's end are excluded from both classes.
  long n_t = 0, s_t = 0, n_c = 0, s_c = 0;
  for (std::size_t w = 0; w < r.starts.size(); ++w) {
    const int t0 = r.starts[w];
    for (std::size_t e = 0; e < r.success_per_start[w].size(); ++e) {
      if (t0 >= r.episode_length[e]) continue;
      bool overlaps = false;
      for (const int ts : r.transition_steps[e])
        if (ts >= t0 && ts < t0 + r.width) {
          overlaps = true;
          break;
        }
      if (overlaps) {
        ++n_t;
        s_t += r.success_per_start[w][e];
      } else {
        ++n_c;
        s_c += r.success_per_start[w][e];
      }
    }
  }
  InterventionSummary sum;
  sum.baseline = r.baseline_rate;
  sum.transition_rate = n_t ? static_cast<double>(s_t) / n_t : r.baseline_rate;
  sum.consistent_rate = n_c ? static_cast<double>(s_c) / n_c : r.baseline_rate;
  sum.drop_transition = sum.baseline - sum.transition_rate;
  sum.drop_consistent = sum.baseline - sum.consistent_rate;
  return sum;
}

}  // namespace gap::sim
