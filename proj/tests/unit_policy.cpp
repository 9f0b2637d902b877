#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gap/nn/gradcheck.hpp"
#include "gap/nn/loss.hpp"
#include "gap/policy.hpp"
#include "helpers.hpp"

using namespace gap;

namespace {

sim::EnvConfig small_env() {
  sim::EnvConfig cfg;
  cfg.grid = 6;  // keeps the unit suite quick; the acceptance run uses 16
  return cfg;
}

policy::PolicyConfig small_policy_cfg(const traj::Schema& s,
                                      policy::FusionMode mode) {
  policy::PolicyConfig c = policy::PolicyConfig::for_dataset(s, mode);
  c.vision_hidden = 16;
  c.proprio_hidden = 8;
  c.head_hidden = 16;
  return c;
}

policy::TrainConfig small_train_cfg(std::uint64_t seed) {
  policy::TrainConfig t;
  t.epochs = 6;
  t.adjust_epochs = 6;
  t.batch_size = 64;
  t.lr = 1e-3;
  t.seed = seed;
  t.record_batches = true;
  return t;
}

std::vector<ind::IndicatorSeries> constant_rho(const traj::Dataset& ds, double v) {
  std::vector<ind::IndicatorSeries> out;
  for (const auto& t : ds.trajectories) out.push_back(ind::fixed_rho(v, t.length()));
  return out;
}

}  // namespace

TEST_CASE("forward basics") {
  nn::Rng rng(1);
  policy::PolicyConfig cfg;
  cfg.mode = policy::FusionMode::concat;
  cfg.obs_dim = 12;
  cfg.proprio_dim = 3;
  cfg.action_dim = 2;
  cfg.vision_hidden = 8;
  cfg.proprio_hidden = 4;
  cfg.head_hidden = 8;
  policy::VPPolicy p = policy::VPPolicy::init(cfg, 7);

  nn::Tensor obs{2, 24}, prop{2, 6};
  for (double& v : obs.v) v = rng.uniform(-1, 1);
  for (double& v : prop.v) v = rng.uniform(-1, 1);

  SUBCASE("zero final weights leave only the bias") {
    p.h2.W->value.zero();
    p.h2.b->value.v = {0.5, -0.25};
    const nn::Tensor out = p.forward(obs, prop);
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(out.at(r, 0) == 0.5);
      CHECK(out.at(r, 1) == -0.25);
    }
  }

  SUBCASE("identical inputs give identical outputs") {
    const nn::Tensor a = p.forward(obs, prop);
    const nn::Tensor b = p.forward(obs, prop);
    CHECK(a.v == b.v);
  }

  SUBCASE("shape mismatch is rejected") {
    nn::Tensor bad{2, 23};
    CHECK_THROWS_AS(p.forward(bad, prop), ArgumentError);
  }
}

TEST_CASE("head split identity stays below 1e-12 over 100 random draws") {
  nn::Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    policy::PolicyConfig cfg;
    cfg.obs_dim = 10;
    cfg.proprio_dim = 4;
    cfg.action_dim = 3;
    cfg.vision_hidden = 6 + static_cast<int>(rng.below(8));
    cfg.proprio_hidden = 3 + static_cast<int>(rng.below(6));
    cfg.head_hidden = 8 + static_cast<int>(rng.below(8));
    policy::VPPolicy p = policy::VPPolicy::init(cfg, rng.next_u64());
    const std::size_t B = 4;
    nn::Tensor fv{B, static_cast<std::size_t>(cfg.vision_hidden)};
    nn::Tensor fs{B, static_cast<std::size_t>(cfg.proprio_hidden)};
    for (double& v : fv.v) v = rng.uniform(-2, 2);
    for (double& v : fs.v) v = rng.uniform(-2, 2);
    worst = std::max(worst, policy::head_split_check(p, fv, fs));
    if (trial == 0) {
      fs.zero();  // zero proprio features still satisfy the identity
      worst = std::max(worst, policy::head_split_check(p, fv, fs));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("policy graph passes finite differences") {
  nn::Rng rng(3);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    policy::PolicyConfig cfg;
    cfg.obs_dim = 6;
    cfg.proprio_dim = 3;
    cfg.action_dim = 2;
    cfg.vision_hidden = 5;
    cfg.proprio_hidden = 4;
    cfg.head_hidden = 6;
    policy::VPPolicy p = policy::VPPolicy::init(cfg, rng.next_u64());
    nn::Tensor obs{3, 12}, prop{3, 6}, target{3, 2};
    for (double& v : obs.v) v = rng.uniform(-1, 1);
    for (double& v : prop.v) v = rng.uniform(-1, 1);
    for (double& v : target.v) v = rng.uniform(-1, 1);
    nn::MseLoss mse;
    auto loss = [&]() { return mse.forward(p.forward(obs, prop), target); };
    loss();
    p.zero_grad();
    p.backward(mse.backward(), nullptr);
    const nn::FdReport rep = nn::fd_check_params(loss, p.groups(), 1e-5, 5, rng);
    worst = std::max(worst, rep.max_rel_err);
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("bc_train on env demos") {
  const sim::EnvConfig env = small_env();
  const traj::Dataset ds = sim::gen_demos(env, 8, 91);

  SUBCASE("vision-only ignores proprio perturbations") {
    const policy::PolicyConfig cfg =
        small_policy_cfg(ds.schema, policy::FusionMode::vision_only);
    policy::TrainConfig t = small_train_cfg(4);
    const policy::TrainResult a = policy::bc_train(ds, cfg, t, nullptr);

    traj::Dataset perturbed = ds;
    nn::Rng rng(5);
    for (auto& tr : perturbed.trajectories)
      for (auto& s : tr.states) {
        for (double& v : s.p) v += rng.uniform(-0.3, 0.3);
        s.g = std::clamp(s.g + rng.uniform(-0.2, 0.2), 0.0, 1.0);
      }
    const policy::TrainResult b = policy::bc_train(perturbed, cfg, t, nullptr);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.policy.v1.W->value.v == b.policy.v1.W->value.v);
  }

  SUBCASE("training is bit-reproducible per seed") {
    const policy::PolicyConfig cfg =
        small_policy_cfg(ds.schema, policy::FusionMode::concat);
    const policy::TrainConfig t = small_train_cfg(11);
    const policy::TrainResult a = policy::bc_train(ds, cfg, t, nullptr);
    const policy::TrainResult b = policy::bc_train(ds, cfg, t, nullptr);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.policy.h1.W->value.v == b.policy.h1.W->value.v);
  }

  SUBCASE("config errors") {
    const policy::PolicyConfig cfg =
        small_policy_cfg(ds.schema, policy::FusionMode::concat);
    policy::TrainConfig t = small_train_cfg(1);
    t.rho_source = policy::RhoMode::learned;
    CHECK_THROWS_AS(policy::bc_train(ds, cfg, t, nullptr), ConfigError);

    auto rho = constant_rho(ds, 0.5);
    rho.pop_back();
    CHECK_THROWS_AS(policy::bc_train(ds, cfg, t, &rho), ConfigError);
  }
}

TEST_CASE("Eq.5 degeneracies under SGD") {
  const sim::EnvConfig env = small_env();
  const traj::Dataset ds = sim::gen_demos(env, 6, 17);
  const policy::PolicyConfig cfg =
      small_policy_cfg(ds.schema, policy::FusionMode::concat);

  policy::TrainConfig base = small_train_cfg(23);
  base.optimizer = nn::OptKind::sgd;
  base.epochs = 5;
  base.adjust_epochs = 5;

  SUBCASE("lambda=1, rho=0 matches plain concat bit for bit") {
    policy::TrainConfig gap_cfg = base;
    gap_cfg.rho_source = policy::RhoMode::fixed;
    gap_cfg.adjust_strength = 1.0;
    const auto rho = constant_rho(ds, 0.0);
    const policy::TrainResult g = policy::bc_train(ds, cfg, gap_cfg, &rho);

    policy::TrainConfig plain = base;
    const policy::TrainResult c = policy::bc_train(ds, cfg, plain, nullptr);

    REQUIRE(g.batches.size() == c.batches.size());
    for (std::size_t i = 0; i < g.batches.size(); ++i)
      CHECK(std::fabs(g.batches[i].loss - c.batches[i].loss) <= 1e-9);
    CHECK(g.policy.s1.W->value.v == c.policy.s1.W->value.v);
    CHECK(g.policy.v1.W->value.v == c.policy.v1.W->value.v);
    CHECK(g.policy.h1.W->value.v == c.policy.h1.W->value.v);
  }

  SUBCASE("rho=1 freezes the proprio chunk only") {
    policy::TrainConfig gap_cfg = base;
    gap_cfg.rho_source = policy::RhoMode::fixed;
    const auto rho = constant_rho(ds, 1.0);
    const policy::VPPolicy init = policy::VPPolicy::init(cfg, gap_cfg.seed);
    const policy::TrainResult g = policy::bc_train(ds, cfg, gap_cfg, &rho);
    CHECK(g.policy.s1.W->value.v == init.s1.W->value.v);
    CHECK(g.policy.s1.b->value.v == init.s1.b->value.v);
    CHECK(g.policy.s2.W->value.v == init.s2.W->value.v);
    CHECK(g.policy.v1.W->value.v != init.v1.W->value.v);
    CHECK(g.policy.h1.W->value.v != init.h1.W->value.v);
  }
}

TEST_CASE("per-batch rho mean is the arithmetic mean of sampled timesteps") {
  const sim::EnvConfig env = small_env();
  const traj::Dataset ds = sim::gen_demos(env, 4, 29);
  const policy::PolicyConfig cfg =
      small_policy_cfg(ds.schema, policy::FusionMode::concat);
  policy::TrainConfig t = small_train_cfg(31);
  t.epochs = 1;
  t.adjust_epochs = 1;
  t.rho_source = policy::RhoMode::fixed;
  t.batch_size = 7;

  // rho distinguishable per trajectory: value = (traj index + 1) / 10
  std::vector<ind::IndicatorSeries> rho;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
    rho.push_back(ind::fixed_rho(static_cast<double>(i + 1) / 10.0,
                                 ds.trajectories[i].length()));
  const policy::TrainResult r = policy::bc_train(ds, cfg, t, &rho);

  // replay the shuffler to recompute each batch's expected mean
  std::vector<std::pair<int, int>> samples;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
    for (int tt = 0; tt < ds.trajectories[i].length(); ++tt)
      samples.push_back({static_cast<int>(i), tt});
  nn::Rng shuffle_rng = nn::Rng(t.seed).derive("batch-shuffle");
  shuffle_rng.shuffle(samples);
  std::size_t b = 0;
  for (std::size_t lo = 0; lo < samples.size(); lo += 7, ++b) {
    const std::size_t hi = std::min(samples.size(), lo + 7);
    double mean = 0;
    for (std::size_t k = lo; k < hi; ++k)
      mean += static_cast<double>(samples[k].first + 1) / 10.0;
    mean /= static_cast<double>(hi - lo);
    CHECK(r.batches[b].rho_mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(r.batches[b].proprio_scale ==
          doctest::Approx(t.adjust_strength * (1.0 - mean)).epsilon(1e-12));
  }
}

TEST_CASE("mask baseline with probability zero matches plain concat") {
  const sim::EnvConfig env = small_env();
  const traj::Dataset ds = sim::gen_demos(env, 5, 37);
  const policy::PolicyConfig cfg =
      small_policy_cfg(ds.schema, policy::FusionMode::concat);
  policy::TrainConfig plain = small_train_cfg(41);
  policy::TrainConfig masked = plain;
  masked.mask_prob = 0.0;
  const policy::TrainResult a = policy::bc_train(ds, cfg, plain, nullptr);
  const policy::TrainResult b = policy::bc_train(ds, cfg, masked, nullptr);
  CHECK(a.policy.h1.W->value.v == b.policy.h1.W->value.v);
  CHECK(a.epoch_loss == b.epoch_loss);

  // nonzero masking changes the trace but still trains
  masked.mask_prob = 0.5;
  const policy::TrainResult m = policy::bc_train(ds, cfg, masked, nullptr);
  CHECK(m.epoch_loss != a.epoch_loss);
}

TEST_CASE("policy checkpoint round trip") {
  const sim::EnvConfig env = small_env();
  const traj::Dataset ds = sim::gen_demos(env, 3, 43);
  const policy::PolicyConfig cfg =
      small_policy_cfg(ds.schema, policy::FusionMode::concat);
  policy::TrainConfig t = small_train_cfg(47);
  t.epochs = 2;
  t.adjust_epochs = 0;
  policy::TrainResult r = policy::bc_train(ds, cfg, t, nullptr);

  const std::string path =
      (std::filesystem::temp_directory_path() / "gap_policy.ckpt").string();
  policy::save_policy(r.policy, "concat", path);
  policy::VPPolicy back = policy::load_policy(path);
  CHECK(policy::policy_mode_label(path) == "concat");
  CHECK(back.v1.W->value.v == r.policy.v1.W->value.v);
  CHECK(back.s2.b->value.v == r.policy.s2.b->value.v);
  CHECK(back.h2.W->value.v == r.policy.h2.W->value.v);

  nn::Rng rng(49);
  nn::Tensor obs{1, static_cast<std::size_t>(cfg.vision_in())};
  nn::Tensor prop{1, static_cast<std::size_t>(cfg.proprio_in())};
  for (double& v : obs.v) v = rng.uniform(0, 1);
  for (double& v : prop.v) v = rng.uniform(0, 1);
  CHECK(back.forward(obs, prop).v == r.policy.forward(obs, prop).v);
  std::remove(path.c_str());
}

TEST_CASE("linear probe freezes the donor vision chunk") {
  const sim::EnvConfig env = small_env();
  const traj::Dataset ds = sim::gen_demos(env, 5, 53);
  const policy::PolicyConfig cfg =
      small_policy_cfg(ds.schema, policy::FusionMode::concat);
  policy::TrainConfig t = small_train_cfg(59);
  t.epochs = 3;
  t.adjust_epochs = 0;
  policy::TrainResult donor = policy::bc_train(ds, cfg, t, nullptr);
  const std::vector<double> frozen = donor.policy.v1.W->value.v;

  policy::TrainConfig pt = small_train_cfg(61);
  pt.epochs = 3;
  pt.adjust_epochs = 0;
  const policy::TrainResult probe =
      policy::linear_probe(donor.policy.vision_group, ds, cfg, pt);
  CHECK(probe.policy.cfg.mode == policy::FusionMode::vision_only);
  CHECK(probe.policy.v1.W->value.v == frozen);
  CHECK(donor.policy.v1.W->value.v == frozen);

  nn::ParamGroup not_vision{"vision", nn::Tag::vision, {}};
  CHECK_THROWS_AS(policy::linear_probe(not_vision, ds, cfg, pt), FormatError);
}

TEST_CASE("rollout adapter pads history and returns one action") {
  const sim::EnvConfig env = small_env();
  const traj::Dataset ds = sim::gen_demos(env, 3, 67);
  const policy::PolicyConfig cfg =
      small_policy_cfg(ds.schema, policy::FusionMode::concat);
  policy::TrainConfig t = small_train_cfg(71);
  t.epochs = 1;
  t.adjust_epochs = 0;
  policy::TrainResult r = policy::bc_train(ds, cfg, t, nullptr);
  policy::PolicyRollout roll(r.policy);
  const sim::EvalResult ev = sim::evaluate(env, roll, 3, sim::Dist::id, 5);
  CHECK(ev.episodes.size() == 3);
  for (const auto& ep : ev.episodes) CHECK(ep.steps <= env.max_steps);
}
