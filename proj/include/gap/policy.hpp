#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gap/indicator.hpp"
#include "gap/nn/layers.hpp"
#include "gap/nn/optimizer.hpp"
#include "gap/simulator.hpp"
#include "gap/trajectory.hpp"

namespace gap::policy {

enum class FusionMode { vision_only, concat };
enum class RhoMode { none, learned, smooth, fixed };
enum class AdjustRule { literal, one_minus_lambda_rho };

struct PolicyConfig {
  FusionMode mode = FusionMode::concat;
  int history = 2;  // observation history length H
  int chunk = 1;    // predicted action sequence length L
  int vision_hidden = 64;
  int proprio_hidden = 32;
  int head_hidden = 64;
  int obs_dim = 0;
  int proprio_dim = 0;  // flattened per-state proprio size
  int action_dim = 0;

  int vision_in() const { return history * obs_dim; }
  int proprio_in() const { return history * proprio_dim; }
  int feature_dim() const {
    return mode == FusionMode::vision_only ? vision_hidden
                                           : vision_hidden + proprio_hidden;
  }
  int out_dim() const { return chunk * action_dim; }

  void validate() const;
  static PolicyConfig for_dataset(const traj::Schema& s, FusionMode mode);
};

// Two feature chunks feeding an MLP head whose first layer fuses the
// concatenated features.
struct VPPolicy {
  PolicyConfig cfg;
  nn::Affine v1, v2, s1, s2, h1, h2;
  nn::Relu v1r, v2r, s1r, s2r, h1r;
  nn::ParamGroup vision_group, proprio_group, head_group;

  static VPPolicy init(const PolicyConfig& cfg, std::uint64_t seed);

  nn::Tensor forward(const nn::Tensor& obs_win, const nn::Tensor& prop_win);
  // fs_row_scale, when present, multiplies each sample's gradient into the
  // proprio chunk (per-sample adjustment variant).  skip_vision avoids the
  // vision-chunk backward when those parameters are frozen.
  void backward(const nn::Tensor& d_out, const std::vector<double>* fs_row_scale,
                bool skip_vision = false);
  void zero_grad();

  std::vector<nn::ParamGroup*> groups();
  const nn::Tensor& vision_features() const { return fv_; }
  const nn::Tensor& proprio_features() const { return fs_; }

private:
  nn::Tensor fv_, fs_;
};

// Evaluates the head twice: once through the fused first layer, once as the
// column-partitioned sum of the two feature paths feeding the shared tail.
// Returns the max absolute deviation between the two routes.
double head_split_check(const VPPolicy& p, const nn::Tensor& f_v,
                        const nn::Tensor& f_s);

struct TrainConfig {
  int epochs = 100;
  int adjust_epochs = 50;        // gradient adjustment active while epoch < this
  double adjust_strength = 0.3;  // lambda
  int batch_size = 128;
  double lr = 1e-3;
  nn::OptKind optimizer = nn::OptKind::adam;
  std::uint64_t seed = 0;
  RhoMode rho_source = RhoMode::none;
  double mask_prob = 0.0;  // proprio-input masking baseline
  AdjustRule adjust_rule = AdjustRule::literal;
  bool per_sample_adjust = false;
  bool adjust_head_columns = false;  // also scale the proprio-facing h1 rows
  bool record_batches = false;

  void validate() const;
};

struct BatchTrace {
  double loss = 0.0;
  double rho_mean = 0.0;
  double proprio_scale = 1.0;
};

struct TrainResult {
  VPPolicy policy;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_rho_mean;
  std::vector<BatchTrace> batches;  // filled when record_batches
};

// Behavior cloning over (observation window, action chunk) samples.  In
// adjustment mode each batch scales the proprio chunk's update by
// lambda*(1-rho_bar) for the first adjust_epochs epochs.  Batch order is a
// function of (seed, dataset) only, so traces are comparable across modes.
TrainResult bc_train(const traj::Dataset& data, const PolicyConfig& pcfg,
                     const TrainConfig& tcfg,
                     const std::vector<ind::IndicatorSeries>* rho);

// Freezes the donor vision chunk and fits a fresh head on f_v alone.
TrainResult linear_probe(const nn::ParamGroup& frozen_vision,
                         const traj::Dataset& data, const PolicyConfig& donor_cfg,
                         const TrainConfig& tcfg);

// Closed-loop adapter; executes the first action of the predicted chunk.
class PolicyRollout final : public sim::RolloutPolicy {
public:
  explicit PolicyRollout(VPPolicy& p) : p_(p) {}
  void begin_episode() override { history_.clear(); }
  std::vector<double> act(const sim::Observation& obs,
                          const sim::EnvState& state) override;

private:
  VPPolicy& p_;
  std::vector<sim::Observation> history_;
};

void save_policy(VPPolicy& p, const std::string& mode_label,
                 const std::string& path);
VPPolicy load_policy(const std::string& path);
std::string policy_mode_label(const std::string& path);

std::vector<double> flatten_proprio(const traj::ProprioState& s);

}  // namespace gap::policy
