#include "gap/policy.hpp"

#include <algorithm>
#include <cmath>

#include "gap/nn/checkpoint.hpp"
#include "gap/nn/loss.hpp"
#include "gap/nn/rng.hpp"

namespace gap::policy {

void PolicyConfig::validate() const {
  if (history < 1 || chunk < 1)
    throw ArgumentError("policy config: H and L must be >= 1");
  if (obs_dim < 1 || action_dim < 1)
    throw ArgumentError("policy config: dims unset");
  if (mode == FusionMode::concat && proprio_dim < 1)
    throw ArgumentError("policy config: concat mode needs proprio_dim");
  if (vision_hidden < 1 || proprio_hidden < 1 || head_hidden < 1)
    throw ArgumentError("policy config: hidden sizes must be >= 1");
}

PolicyConfig PolicyConfig::for_dataset(const traj::Schema& s, FusionMode mode) {
  PolicyConfig c;
  c.mode = mode;
  c.obs_dim = s.obs_dim;
  c.proprio_dim = s.pos_dim + s.theta_dim + 1;
  c.action_dim = s.action_dim;
  return c;
}

std::vector<double> flatten_proprio(const traj::ProprioState& s) {
  std::vector<double> out;
  out.reserve(s.p.size() + s.theta.size() + 1);
  out.insert(out.end(), s.p.begin(), s.p.end());
  out.insert(out.end(), s.theta.begin(), s.theta.end());
  out.push_back(s.g);
  return out;
}

VPPolicy VPPolicy::init(const PolicyConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  VPPolicy p;
  p.cfg = cfg;
  nn::Rng rng = nn::Rng(seed).derive("policy-init");

  const auto vh = static_cast<std::size_t>(cfg.vision_hidden);
  const auto ph = static_cast<std::size_t>(cfg.proprio_hidden);
  const auto hh = static_cast<std::size_t>(cfg.head_hidden);

  p.v1 = nn::Affine("v1", static_cast<std::size_t>(cfg.vision_in()), vh);
  p.v2 = nn::Affine("v2", vh, vh);
  p.v1.compute_dx = false;
  p.v1.init_uniform(rng);
  p.v2.init_uniform(rng);
  p.vision_group = {"vision", nn::Tag::vision, {p.v1.W, p.v1.b, p.v2.W, p.v2.b}};

  if (cfg.mode == FusionMode::concat) {
    p.s1 = nn::Affine("s1", static_cast<std::size_t>(cfg.proprio_in()), ph);
    p.s2 = nn::Affine("s2", ph, ph);
    p.s1.compute_dx = false;
    p.s1.init_uniform(rng);
    p.s2.init_uniform(rng);
    p.proprio_group = {"proprio", nn::Tag::proprio,
                       {p.s1.W, p.s1.b, p.s2.W, p.s2.b}};
  }

  p.h1 = nn::Affine("h1", static_cast<std::size_t>(cfg.feature_dim()), hh);
  p.h2 = nn::Affine("h2", hh, static_cast<std::size_t>(cfg.out_dim()));
  p.h1.init_uniform(rng);
  p.h2.init_uniform(rng);
  p.head_group = {"head", nn::Tag::head, {p.h1.W, p.h1.b, p.h2.W, p.h2.b}};
  return p;
}

nn::Tensor VPPolicy::forward(const nn::Tensor& obs_win, const nn::Tensor& prop_win) {
  nn::require_shape(obs_win, obs_win.rows(),
                    static_cast<std::size_t>(cfg.vision_in()), "forward obs");
  fv_ = v2r.forward(v2.forward(v1r.forward(v1.forward(obs_win))));
  if (cfg.mode == FusionMode::concat) {
    nn::require_shape(prop_win, obs_win.rows(),
                      static_cast<std::size_t>(cfg.proprio_in()), "forward proprio");
    fs_ = s2r.forward(s2.forward(s1r.forward(s1.forward(prop_win))));
    return h2.forward(h1r.forward(h1.forward(nn::concat_cols(fv_, fs_))));
  }
  return h2.forward(h1r.forward(h1.forward(fv_)));
}

void VPPolicy::backward(const nn::Tensor& d_out,
                        const std::vector<double>* fs_row_scale,
                        bool skip_vision) {
  const nn::Tensor d_feat = h1.backward(h1r.backward(h2.backward(d_out)));
  if (cfg.mode == FusionMode::concat) {
    nn::Tensor d_fv, d_fs;
    nn::split_cols(d_feat, static_cast<std::size_t>(cfg.vision_hidden), d_fv, d_fs);
    if (fs_row_scale) {
      const std::size_t c = d_fs.cols();
      for (std::size_t r = 0; r < d_fs.rows(); ++r)
        for (std::size_t k = 0; k < c; ++k)
          d_fs.v[r * c + k] *= (*fs_row_scale)[r];
    }
    s1.backward(s1r.backward(s2.backward(s2r.backward(d_fs))));
    if (!skip_vision) v1.backward(v1r.backward(v2.backward(v2r.backward(d_fv))));
    return;
  }
  if (!skip_vision) v1.backward(v1r.backward(v2.backward(v2r.backward(d_feat))));
}

void VPPolicy::zero_grad() {
  vision_group.zero_grad();
  proprio_group.zero_grad();
  head_group.zero_grad();
}

std::vector<nn::ParamGroup*> VPPolicy::groups() {
  if (cfg.mode == FusionMode::concat)
    return {&vision_group, &proprio_group, &head_group};
  return {&vision_group, &head_group};
}

double head_split_check(const VPPolicy& p, const nn::Tensor& f_v,
                        const nn::Tensor& f_s) {
  if (p.cfg.mode != FusionMode::concat)
    throw ArgumentError("head_split_check: needs concat mode");
  const std::size_t B = f_v.rows();
  const std::size_t vh = f_v.cols(), ph = f_s.cols();
  const std::size_t hh = p.h1.out_dim(), od = p.h2.out_dim();
  const nn::Tensor& W1 = p.h1.W->value;
  const nn::Tensor& b1 = p.h1.b->value;
  const nn::Tensor& W2 = p.h2.W->value;
  const nn::Tensor& b2 = p.h2.b->value;

  auto tail = [&](const std::vector<double>& z1, std::vector<double>& out) {
    for (std::size_t o = 0; o < od; ++o) out[o] = b2.v[o];
    for (std::size_t k = 0; k < hh; ++k) {
      const double a = std::max(0.0, z1[k]);
      if (a == 0.0) continue;
      for (std::size_t o = 0; o < od; ++o) out[o] += a * W2.v[k * od + o];
    }
  };

  double worst = 0.0;
  std::vector<double> z_full(hh), z_split(hh), sum_v(hh), sum_s(hh);
  std::vector<double> out_full(od), out_split(od);
  for (std::size_t r = 0; r < B; ++r) {
    // Route 1: the fused first layer over concat(f_v, f_s).
    for (std::size_t k = 0; k < hh; ++k) z_full[k] = b1.v[k];
    for (std::size_t j = 0; j < vh; ++j)
      for (std::size_t k = 0; k < hh; ++k)
        z_full[k] += f_v.at(r, j) * W1.v[j * hh + k];
    for (std::size_t j = 0; j < ph; ++j)
      for (std::size_t k = 0; k < hh; ++k)
        z_full[k] += f_s.at(r, j) * W1.v[(vh + j) * hh + k];

    // Route 2: column-partitioned paths summed, then the shared tail.
    std::fill(sum_v.begin(), sum_v.end(), 0.0);
    std::fill(sum_s.begin(), sum_s.end(), 0.0);
    for (std::size_t j = 0; j < vh; ++j)
      for (std::size_t k = 0; k < hh; ++k)
        sum_v[k] += f_v.at(r, j) * W1.v[j * hh + k];
    for (std::size_t j = 0; j < ph; ++j)
      for (std::size_t k = 0; k < hh; ++k)
        sum_s[k] += f_s.at(r, j) * W1.v[(vh + j) * hh + k];
    for (std::size_t k = 0; k < hh; ++k)
      z_split[k] = (sum_s[k] + sum_v[k]) + b1.v[k];

    tail(z_full, out_full);
    tail(z_split, out_split);
    for (std::size_t o = 0; o < od; ++o)
      worst = std::max(worst, std::fabs(out_full[o] - out_split[o]));
  }
  return worst;
}

void TrainConfig::validate() const {
  if (epochs < 0 || adjust_epochs < 0 || adjust_epochs > epochs)
    throw ArgumentError("train config: need 0 <= adjust_epochs <= epochs");
  if (!(adjust_strength > 0.0))
    throw ArgumentError("train config: lambda must be > 0");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0))
    throw ArgumentError("train config: mask_prob must be in [0,1]");
  if (batch_size < 1) throw ArgumentError("train config: batch_size must be >= 1");
}

namespace {

struct SampleRef {
  int traj;
  int t;
};

struct Batches {
  nn::Tensor obs, prop, target;
  std::vector<double> rho;
};

void gather(const traj::Dataset& data, const PolicyConfig& cfg,
            const std::vector<SampleRef>& samples, std::size_t lo, std::size_t hi,
            const std::vector<ind::IndicatorSeries>* rho, Batches& out) {
  const std::size_t B = hi - lo;
  const std::size_t H = static_cast<std::size_t>(cfg.history);
  const std::size_t L = static_cast<std::size_t>(cfg.chunk);
  const std::size_t od = static_cast<std::size_t>(cfg.obs_dim);
  const std::size_t pd = static_cast<std::size_t>(cfg.proprio_dim);
  const std::size_t ad = static_cast<std::size_t>(cfg.action_dim);
  out.obs = nn::Tensor{B, H * od};
  out.prop = nn::Tensor{B, H * pd};
  out.target = nn::Tensor{B, L * ad};
  out.rho.assign(B, 0.0);
  for (std::size_t r = 0; r < B; ++r) {
    const SampleRef& ref = samples[lo + r];
    const traj::Trajectory& tr = data.trajectories[static_cast<std::size_t>(ref.traj)];
    const int n = tr.length();
    for (std::size_t k = 0; k < H; ++k) {
      const int src = std::max(0, ref.t - static_cast<int>(H) + 1 + static_cast<int>(k));
      const auto& o = tr.obs[static_cast<std::size_t>(src)];
      std::copy(o.begin(), o.end(), &out.obs.v[(r * H + k) * od]);
      const std::vector<double> ps = flatten_proprio(tr.states[static_cast<std::size_t>(src)]);
      std::copy(ps.begin(), ps.end(), &out.prop.v[(r * H + k) * pd]);
    }
    for (std::size_t l = 0; l < L; ++l) {
      const int src = std::min(n - 1, ref.t + static_cast<int>(l));
      const auto& a = tr.actions[static_cast<std::size_t>(src)];
      std::copy(a.begin(), a.end(), &out.target.v[(r * L + l) * ad]);
    }
    if (rho)
      out.rho[r] = (*rho)[static_cast<std::size_t>(ref.traj)]
                       .values[static_cast<std::size_t>(ref.t)];
  }
}

double adjust_factor(const TrainConfig& tcfg, double rho) {
  if (tcfg.adjust_rule == AdjustRule::literal)
    return tcfg.adjust_strength * (1.0 - rho);
  return 1.0 - tcfg.adjust_strength * rho;
}

TrainResult train_impl(const traj::Dataset& data, const PolicyConfig& pcfg,
                       const TrainConfig& tcfg,
                       const std::vector<ind::IndicatorSeries>* rho,
                       VPPolicy&& initial, bool freeze_vision) {
  tcfg.validate();
  traj::validate(data);
  if (data.trajectories.empty()) throw ArgumentError("bc_train: empty dataset");
  const bool adjust_enabled = tcfg.rho_source != RhoMode::none;
  if (adjust_enabled && pcfg.mode == FusionMode::vision_only)
    throw ConfigError("bc_train: gradient adjustment needs the concat policy");
  if (adjust_enabled && rho == nullptr)
    throw ConfigError("bc_train: rho_source set but no indicator series given");
  if (adjust_enabled) {
    if (rho->size() != data.trajectories.size())
      throw ConfigError("bc_train: one indicator series per trajectory required");
    for (std::size_t i = 0; i < rho->size(); ++i)
      if (static_cast<int>((*rho)[i].values.size()) !=
          data.trajectories[i].length())
        throw ConfigError("bc_train: indicator length mismatch on trajectory " +
                          std::to_string(i));
  }

  TrainResult res{std::move(initial), {}, {}, {}};
  VPPolicy& policy = res.policy;

  std::vector<SampleRef> samples;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i)
    for (int t = 0; t < data.trajectories[i].length(); ++t)
      samples.push_back({static_cast<int>(i), t});

  nn::Rng shuffle_rng = nn::Rng(tcfg.seed).derive("batch-shuffle");
  nn::Rng mask_rng = nn::Rng(tcfg.seed).derive("proprio-mask");
  nn::Optimizer opt(tcfg.optimizer, tcfg.lr);
  nn::MseLoss loss_fn;
  const std::size_t bs = static_cast<std::size_t>(tcfg.batch_size);
  const bool use_rho = adjust_enabled;
  Batches batch;
  std::vector<double> row_scales;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    shuffle_rng.shuffle(samples);
    const bool adjusting = use_rho && epoch < tcfg.adjust_epochs;
    double epoch_loss_sum = 0.0;
    double epoch_rho_sum = 0.0;
    std::size_t epoch_samples = 0, epoch_batches = 0;

    for (std::size_t lo = 0; lo < samples.size(); lo += bs) {
      const std::size_t hi = std::min(samples.size(), lo + bs);
      gather(data, pcfg, samples, lo, hi, use_rho ? rho : nullptr, batch);
      const std::size_t B = hi - lo;

      if (tcfg.mask_prob > 0.0 && pcfg.mode == FusionMode::concat) {
        const std::size_t pc = batch.prop.cols();
        for (std::size_t r = 0; r < B; ++r)
          if (mask_rng.uniform() < tcfg.mask_prob)
            std::fill_n(&batch.prop.v[r * pc], pc, 0.0);
      }

      const nn::Tensor pred = policy.forward(batch.obs, batch.prop);
      const double loss = loss_fn.forward(pred, batch.target);
      if (!std::isfinite(loss))
        throw TrainingError("bc_train: non-finite loss at epoch " +
                            std::to_string(epoch));

      double rho_mean = 0.0;
      if (use_rho) {
        for (std::size_t r = 0; r < B; ++r) rho_mean += batch.rho[r];
        rho_mean /= static_cast<double>(B);
      }

      policy.zero_grad();
      const std::vector<double>* scales = nullptr;
      if (adjusting && tcfg.per_sample_adjust) {
        row_scales.resize(B);
        for (std::size_t r = 0; r < B; ++r)
          row_scales[r] = adjust_factor(tcfg, batch.rho[r]);
        scales = &row_scales;
      }
      policy.backward(loss_fn.backward(), scales, freeze_vision);

      double proprio_scale = 1.0;
      if (adjusting && !tcfg.per_sample_adjust)
        proprio_scale = adjust_factor(tcfg, rho_mean);

      if (adjusting && tcfg.adjust_head_columns && !tcfg.per_sample_adjust) {
        // Scale the gradient of the proprio-facing rows of the fused layer.
        nn::Tensor& g1 = policy.h1.W->grad;
        const std::size_t hh = policy.h1.out_dim();
        for (int j = pcfg.vision_hidden; j < pcfg.feature_dim(); ++j)
          for (std::size_t k = 0; k < hh; ++k)
            g1.v[static_cast<std::size_t>(j) * hh + k] *= proprio_scale;
      }

      if (!freeze_vision) opt.step(policy.vision_group, 1.0);
      if (pcfg.mode == FusionMode::concat)
        opt.step(policy.proprio_group, proprio_scale);
      opt.step(policy.head_group, 1.0);

      epoch_loss_sum += loss * static_cast<double>(B);
      epoch_rho_sum += rho_mean;
      epoch_samples += B;
      ++epoch_batches;
      if (tcfg.record_batches) res.batches.push_back({loss, rho_mean, proprio_scale});
    }
    res.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(epoch_samples));
    res.epoch_rho_mean.push_back(
        epoch_batches ? epoch_rho_sum / static_cast<double>(epoch_batches) : 0.0);
  }
  return res;
}

}  // namespace

TrainResult bc_train(const traj::Dataset& data, const PolicyConfig& pcfg,
                     const TrainConfig& tcfg,
                     const std::vector<ind::IndicatorSeries>* rho) {
  pcfg.validate();
  return train_impl(data, pcfg, tcfg, rho, VPPolicy::init(pcfg, tcfg.seed),
                    /*freeze_vision=*/false);
}

TrainResult linear_probe(const nn::ParamGroup& frozen_vision,
                         const traj::Dataset& data, const PolicyConfig& donor_cfg,
                         const TrainConfig& tcfg) {
  PolicyConfig cfg = donor_cfg;
  cfg.mode = FusionMode::vision_only;
  cfg.validate();
  VPPolicy probe = VPPolicy::init(cfg, tcfg.seed);
  for (const nn::ParamPtr& p : probe.vision_group.params) {
    const nn::ParamPtr src = frozen_vision.find(p->name);
    if (!src || !src->value.same_shape(p->value))
      throw FormatError("linear_probe: donor vision group missing tensor " +
                        p->name);
    p->value = src->value;
  }
  TrainConfig probe_cfg = tcfg;
  probe_cfg.rho_source = RhoMode::none;
  probe_cfg.mask_prob = 0.0;
  return train_impl(data, cfg, probe_cfg, nullptr, std::move(probe),
                    /*freeze_vision=*/true);
}

std::vector<double> PolicyRollout::act(const sim::Observation& obs,
                                       const sim::EnvState&) {
  history_.push_back(obs);
  const PolicyConfig& cfg = p_.cfg;
  const std::size_t H = static_cast<std::size_t>(cfg.history);
  const std::size_t od = static_cast<std::size_t>(cfg.obs_dim);
  const std::size_t pd = static_cast<std::size_t>(cfg.proprio_dim);
  nn::Tensor obs_win{1, H * od}, prop_win{1, H * pd};
  for (std::size_t k = 0; k < H; ++k) {
    const std::size_t idx =
        history_.size() >= H - k ? history_.size() - (H - k) : 0;
    const sim::Observation& o = history_[idx];
    std::copy(o.visual.begin(), o.visual.end(), &obs_win.v[k * od]);
    const std::vector<double> ps = flatten_proprio(o.proprio);
    std::copy(ps.begin(), ps.end(), &prop_win.v[k * pd]);
  }
  const nn::Tensor out = p_.forward(obs_win, prop_win);
  return {out.v.begin(), out.v.begin() + cfg.action_dim};
}

void save_policy(VPPolicy& p, const std::string& mode_label,
                 const std::string& path) {
  nlohmann::json meta;
  meta["kind"] = "policy";
  meta["mode_label"] = mode_label;
  meta["fusion"] = p.cfg.mode == FusionMode::concat ? "concat" : "vision_only";
  meta["history"] = p.cfg.history;
  meta["chunk"] = p.cfg.chunk;
  meta["vision_hidden"] = p.cfg.vision_hidden;
  meta["proprio_hidden"] = p.cfg.proprio_hidden;
  meta["head_hidden"] = p.cfg.head_hidden;
  meta["obs_dim"] = p.cfg.obs_dim;
  meta["proprio_dim"] = p.cfg.proprio_dim;
  meta["action_dim"] = p.cfg.action_dim;
  std::vector<nn::ParamGroup> gs;
  for (nn::ParamGroup* g : p.groups()) gs.push_back(*g);
  nn::save_checkpoint(gs, meta, path);
}

VPPolicy load_policy(const std::string& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.meta.value("kind", "") != "policy")
    throw FormatError(path + ": not a policy checkpoint");
  PolicyConfig cfg;
  cfg.mode = ck.meta.at("fusion").get<std::string>() == "concat"
                 ? FusionMode::concat
                 : FusionMode::vision_only;
  cfg.history = ck.meta.at("history").get<int>();
  cfg.chunk = ck.meta.at("chunk").get<int>();
  cfg.vision_hidden = ck.meta.at("vision_hidden").get<int>();
  cfg.proprio_hidden = ck.meta.at("proprio_hidden").get<int>();
  cfg.head_hidden = ck.meta.at("head_hidden").get<int>();
  cfg.obs_dim = ck.meta.at("obs_dim").get<int>();
  cfg.proprio_dim = ck.meta.at("proprio_dim").get<int>();
  cfg.action_dim = ck.meta.at("action_dim").get<int>();
  VPPolicy p = VPPolicy::init(cfg, 0);
  for (const nn::ParamGroup& g : ck.groups) {
    nn::ParamGroup* dst = nullptr;
    for (nn::ParamGroup* cand : p.groups())
      if (cand->name == g.name) dst = cand;
    if (!dst) throw FormatError(path + ": unexpected group " + g.name);
    for (const nn::ParamPtr& q : dst->params) {
      const nn::ParamPtr src = g.find(q->name);
      if (!src || !src->value.same_shape(q->value))
        throw FormatError(path + ": missing or misshaped tensor " + q->name);
      q->value = src->value;
    }
  }
  return p;
}

std::string policy_mode_label(const std::string& path) {
  return nn::load_checkpoint(path).meta.value("mode_label", "");
}

}  // namespace gap::policy
