#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gap/trajectory.hpp"

namespace gap::seg {

enum class DistanceMode { gap, cotpc };

struct SegParams {
  double orientation_weight = 1.0;  // weight on the orientation cosine term
  double opening_weight = 2e-3;     // weight on the opening sign-match term
  std::optional<double> change_penalty;  // per-change-point penalty
  std::optional<int> k_changes;          // exact change-point count
  int min_phase_len = 3;                 // states per phase
  DistanceMode mode = DistanceMode::gap;
  // Off: a mismatched opening sign contributes 0 (literal reading of the
  // distance).  On: it contributes +opening_weight instead.
  bool opening_mismatch_penalty = false;

  static SegParams penalized(double gamma = 1.0) {
    SegParams p;
    p.change_penalty = gamma;
    return p;
  }
  static SegParams fixed_changes(int k) {
    SegParams p;
    p.k_changes = k;
    return p;
  }

  void validate() const;
};

struct SegmentationResult {
  std::vector<int> change_indices;  // strictly increasing, in {1..N-1}
  std::vector<double> phase_costs;  // one per phase, left to right
  double total_cost = 0.0;          // sum of phase costs (+ gamma*|I|)
};

// Cosine of two vectors with the zero-norm convention cos(0, x) = 0.
double cosine(const std::vector<double>& a, const std::vector<double>& b);
int sign_of(double x);

// Motion-consistency distance between a phase motion and one adjacent motion.
double motion_distance(const traj::Motion& phase, const traj::Motion& step,
                       const SegParams& params);

// 1 - cos(a1, a2), same zero-norm convention.
double cotpc_distance(const std::vector<double>& a1,
                      const std::vector<double>& a2);

// Inconsistency of the phase spanning states [t1, t2]: the sum over the
// phase's adjacent motions (gap mode) or over per-step actions against the
// mean phase action (cotpc mode).
double phase_cost(const traj::Trajectory& t, int t1, int t2,
                  const SegParams& params);

// Globally optimal change-point set by dynamic programming.  Ties break
// toward fewer change points, then the lexicographically smallest index set.
SegmentationResult segment_dp(const traj::Trajectory& t, const SegParams& params);

// Exhaustive oracle with identical tie-breaking; refuses N > 16.
SegmentationResult segment_bruteforce(const traj::Trajectory& t,
                                      const SegParams& params);

// Perturbs each index by a geometric number of one-step shifts in a single
// random direction; clamps to [1, N-1] and deduplicates.
std::vector<int> inject_index_noise(const std::vector<int>& indices, int n,
                                    double p_shift, std::uint64_t seed);

}  // namespace gap::seg
