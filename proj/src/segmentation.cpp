#include "gap/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gap/nn/rng.hpp"

namespace gap::seg {

void SegParams::validate() const {
  if (change_penalty.has_value() == k_changes.has_value())
    throw ArgumentError("seg params: exactly one of change_penalty/k_changes");
  if (change_penalty && *change_penalty < 0.0)
    throw ArgumentError("seg params: change_penalty must be >= 0");
  if (k_changes && *k_changes < 0)
    throw ArgumentError("seg params: k_changes must be >= 0");
  if (orientation_weight < 0.0 || opening_weight < 0.0)
    throw ArgumentError("seg params: weights must be >= 0");
  if (min_phase_len < 2) throw ArgumentError("seg params: min_phase_len must be >= 2");
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ArgumentError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

double motion_distance(const traj::Motion& phase, const traj::Motion& step,
                       const SegParams& params) {
  if (phase.dp.size() != step.dp.size() ||
      phase.dtheta.size() != step.dtheta.size())
    throw ArgumentError("motion_distance: dimension mismatch");
  double d = -cosine(phase.dp, step.dp);
  if (!phase.dtheta.empty())
    d -= params.orientation_weight * cosine(phase.dtheta, step.dtheta);
  const bool match = sign_of(phase.dg) == sign_of(step.dg);
  if (match)
    d -= params.opening_weight;
  else if (params.opening_mismatch_penalty)
    d += params.opening_weight;
  return d;
}

double cotpc_distance(const std::vector<double>& a1,
                      const std::vector<double>& a2) {
  return 1.0 - cosine(a1, a2);
}

double phase_cost(const traj::Trajectory& t, int t1, int t2,
                  const SegParams& params) {
  const int n = t.length();
  if (!(0 <= t1 && t1 < t2 && t2 <= n - 1))
    throw ArgumentError("phase_cost: need 0 <= t1 < t2 <= N-1");
  if (t2 - t1 < params.min_phase_len - 1)
    throw ArgumentError("phase_cost: phase shorter than min_phase_len");

  double acc = 0.0;
  if (params.mode == DistanceMode::gap) {
    const traj::Motion phase = traj::motion_between(t, t1, t2);
    for (int i = t1; i < t2; ++i)
      acc += motion_distance(phase, traj::motion_between(t, i, i + 1), params);
    return acc;
  }
  const std::size_t ad = t.actions[0].size();
  std::vector<double> mean(ad, 0.0);
  for (int i = t1; i < t2; ++i)
    for (std::size_t k = 0; k < ad; ++k)
      mean[k] += t.actions[static_cast<std::size_t>(i)][k];
  for (double& m : mean) m /= static_cast<double>(t2 - t1);
  for (int i = t1; i < t2; ++i)
    acc += cotpc_distance(mean, t.actions[static_cast<std::size_t>(i)]);
  return acc;
}

namespace {

struct Cand {
  bool feasible = false;
  double cost_sum = 0.0;
  std::vector<int> indices;
};

double total_of(const Cand& c, const SegParams& p) {
  if (p.change_penalty)
    return c.cost_sum +
           *p.change_penalty * static_cast<double>(c.indices.size());
  return c.cost_sum;
}

// Strict total order: lower objective, then fewer change points, then
// lexicographically smaller index set.
bool better(const Cand& a, const Cand& b, const SegParams& p) {
  if (!b.feasible) return a.feasible;
  if (!a.feasible) return false;
  const double ta = total_of(a, p), tb = total_of(b, p);
  if (ta != tb) return ta < tb;
  if (a.indices.size() != b.indices.size())
    return a.indices.size() < b.indices.size();
  return a.indices < b.indices;
}

// Dense cost table; entry (a, b) is the cost of the phase spanning states
// [a, b], or NaN where the phase would be too short.
std::vector<double> cost_table(const traj::Trajectory& t, const SegParams& p) {
  const int n = t.length();
  std::vector<double> c(static_cast<std::size_t>(n) * n,
                        std::numeric_limits<double>::quiet_NaN());
  for (int a = 0; a < n; ++a)
    for (int b = a + p.min_phase_len - 1; b < n; ++b)
      c[static_cast<std::size_t>(a) * n + b] = phase_cost(t, a, b, p);
  return c;
}

SegmentationResult finish(const traj::Trajectory& t, const SegParams& p,
                          const Cand& best) {
  SegmentationResult r;
  r.change_indices = best.indices;
  int prev = 0;
  double fold = 0.0;
  const int n = t.length();
  auto close_phase = [&](int end) {
    const double c = phase_cost(t, prev, end, p);
    r.phase_costs.push_back(c);
    fold += c;
  };
  for (const int c : best.indices) {
    close_phase(c - 1);
    prev = c;
  }
  close_phase(n - 1);
  r.total_cost = fold;
  if (p.change_penalty)
    r.total_cost +=
        *p.change_penalty * static_cast<double>(best.indices.size());
  return r;
}

}  // namespace

SegmentationResult segment_dp(const traj::Trajectory& t, const SegParams& p) {
  p.validate();
  const int n = t.length();
  const int L = p.min_phase_len;
  if (n < 2 * L)
    throw ArgumentError("segment_dp: trajectory too short (N < 2*min_phase_len)");
  if (p.k_changes && (*p.k_changes + 1) * L > n)
    throw ArgumentError("segment_dp: k_changes infeasible for this length");

  const std::vector<double> C = cost_table(t, p);
  auto cost = [&](int a, int b) { return C[static_cast<std::size_t>(a) * n + b]; };

  if (p.change_penalty) {
    std::vector<Cand> best(static_cast<std::size_t>(n));
    for (int e = L - 1; e < n; ++e) {
      Cand& slot = best[static_cast<std::size_t>(e)];
      {
        Cand c0{true, cost(0, e), {}};
        if (better(c0, slot, p)) slot = c0;
      }
      for (int s = L; s + L - 1 <= e; ++s) {
        const Cand& prev = best[static_cast<std::size_t>(s - 1)];
        if (!prev.feasible) continue;
        Cand c{true, prev.cost_sum + cost(s, e), prev.indices};
        c.indices.push_back(s);
        if (better(c, slot, p)) slot = c;
      }
    }
    return finish(t, p, best[static_cast<std::size_t>(n - 1)]);
  }

  const int k = *p.k_changes;
  // best[j][e]: best segmentation of [0, e] using exactly j change points.
  std::vector<std::vector<Cand>> best(static_cast<std::size_t>(k + 1),
                                      std::vector<Cand>(static_cast<std::size_t>(n)));
  for (int e = L - 1; e < n; ++e)
    best[0][static_cast<std::size_t>(e)] = Cand{true, cost(0, e), {}};
  for (int j = 1; j <= k; ++j)
    for (int e = (j + 1) * L - 1; e < n; ++e) {
      Cand& slot = best[static_cast<std::size_t>(j)][static_cast<std::size_t>(e)];
      for (int s = j * L; s + L - 1 <= e; ++s) {
        const Cand& prev =
            best[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(s - 1)];
        if (!prev.feasible) continue;
        Cand c{true, prev.cost_sum + cost(s, e), prev.indices};
        c.indices.push_back(s);
        if (better(c, slot, p)) slot = c;
      }
    }
  const Cand& ans = best[static_cast<std::size_t>(k)][static_cast<std::size_t>(n - 1)];
  if (!ans.feasible) throw ArgumentError("segment_dp: no feasible segmentation");
  return finish(t, p, ans);
}

SegmentationResult segment_bruteforce(const traj::Trajectory& t,
                                      const SegParams& p) {
  p.validate();
  const int n = t.length();
  if (n > 16)
    throw RefusalError("segment_bruteforce: refusing N > 16 (got " +
                       std::to_string(n) + ")");
  const int L = p.min_phase_len;
  if (n < 2 * L)
    throw ArgumentError("segment_bruteforce: trajectory too short");
  if (p.k_changes && (*p.k_changes + 1) * L > n)
    throw ArgumentError("segment_bruteforce: k_changes infeasible");

  const std::vector<double> C = cost_table(t, p);
  auto cost = [&](int a, int b) { return C[static_cast<std::size_t>(a) * n + b]; };

  Cand winner;
  const unsigned long masks = 1ul << (n - 1);  // bit i <-> change index i+1
  for (unsigned long mask = 0; mask < masks; ++mask) {
    Cand cand{true, 0.0, {}};
    int prev = 0;
    bool ok = true;
    for (int c = 1; c < n && ok; ++c) {
      if (!(mask & (1ul << (c - 1)))) continue;
      if (c - prev < L) {
        ok = false;
        break;
      }
      cand.cost_sum += cost(prev, c - 1);
      cand.indices.push_back(c);
      prev = c;
    }
    if (!ok || n - prev < L) continue;
    if (p.k_changes && static_cast<int>(cand.indices.size()) != *p.k_changes)
      continue;
    cand.cost_sum += cost(prev, n - 1);
    if (better(cand, winner, p)) winner = cand;
  }
  if (!winner.feasible)
    throw ArgumentError("segment_bruteforce: no feasible segmentation");
  return finish(t, p, winner);
}

std::vector<int> inject_index_noise(const std::vector<int>& indices, int n,
                                    double p_shift, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::set<int> out;
  for (int idx : indices) {
    idx = std::clamp(idx, 1, n - 1);
    const int dir = rng.uniform() < 0.5 ? -1 : 1;
    while (rng.uniform() < p_shift) {
      const int next = std::clamp(idx + dir, 1, n - 1);
      if (next == idx) break;  // pinned at the boundary
      idx = next;
    }
    out.insert(idx);
  }
  return {out.begin(), out.end()};
}

}  // namespace gap::seg
