#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gap/nn/layers.hpp"
#include "gap/trajectory.hpp"

namespace gap::ind {

// Supervision derived from a change-index set: binary targets at the indices,
// reduced loss weight within `window` steps of the nearest index.
struct IndicatorLabels {
  std::vector<double> targets;  // y_t in {0,1}
  std::vector<double> weights;  // 1 or w_low
  int window = 3;
  double w_low = 0.2;
};

IndicatorLabels build_labels(const std::vector<int>& indices, int n, int window,
                             double w_low);

enum class RhoSource { learned, smooth, fixed };

// Per-timestep motion-transition probability, one value per state.
struct IndicatorSeries {
  std::vector<double> values;
  RhoSource source = RhoSource::learned;
};

struct IndicatorHyper {
  int epochs = 200;
  double lr = 1e-3;
  int hidden_dim = 32;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

// Single-layer LSTM over normalized proprio deltas with an affine-sigmoid
// readout.  The delta at position i supports the prediction for state i+1.
struct IndicatorModel {
  nn::Lstm lstm;
  nn::Affine readout;
  std::vector<double> norm_mean, norm_std;
  int input_dim = 0;
  int hidden_dim = 0;
  int epochs_trained = 0;
  double final_loss = 0.0;
  std::vector<double> loss_curve;

  nn::ParamGroup group() const;
};

using LabeledDeltas = std::pair<nn::Tensor, IndicatorLabels>;  // (T x D, labels for T+1 states)

IndicatorModel train_indicator(const std::vector<LabeledDeltas>& data,
                               const IndicatorHyper& hyper);

IndicatorSeries predict_rho(IndicatorModel& model, const traj::Trajectory& t);

// Gaussian bumps centered on each change index; zero when the set is empty.
IndicatorSeries smooth_rho(const std::vector<int>& indices, int n, double sigma);

IndicatorSeries fixed_rho(double value, int n);

// Flattened deltas of a trajectory as a (N-1) x D tensor, D = D_p + D_theta + 1.
nn::Tensor delta_tensor(const traj::Trajectory& t);

void save_indicator(const IndicatorModel& m, const std::string& path);
IndicatorModel load_indicator(const std::string& path);

}  // namespace gap::ind
