#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gap/metrics.hpp"
#include "gap/nn/gradcheck.hpp"
#include "gap/nn/loss.hpp"
#include "gap/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

gap::cfg::KvConfig make_config(const std::string& config_path,
                               const std::vector<std::string>& overrides) {
  gap::cfg::KvConfig kv = gap::cfg::KvConfig::defaults();
  if (!config_path.empty()) kv.apply_file(config_path);
  for (const std::string& o : overrides) kv.apply_override(o);
  return kv;
}

// Layer-by-layer finite-difference verification; shared by the grad-check
// subcommand and the test suites.
int run_grad_check(std::ostream& out) {
  using namespace gap;
  nn::Rng rng(20240001);
  double worst = 0.0;
  auto check = [&](const std::string& name, auto&& build_loss,
                   std::vector<nn::ParamGroup*> groups) {
    nn::Rng local = rng.derive(name);
    nn::FdReport rep;
    for (int draw = 0; draw < 20; ++draw) {
      auto loss = build_loss(local);
      rep.absorb(nn::fd_check_params(loss, groups, 1e-5, 6, local));
    }
    out << "  " << name << ": max rel err " << rep.max_rel_err << " over "
        << rep.checked << " coords\n";
    worst = std::max(worst, rep.max_rel_err);
  };

  nn::Affine aff("aff", 5, 4);
  nn::ParamGroup aff_g{"aff", nn::Tag::head, {aff.W, aff.b}};
  check(
      "affine+tanh+mse",
      [&](nn::Rng& r) {
        aff.init_uniform(r);
        nn::Tensor x{3, 5}, t{3, 4};
        for (double& v : x.v) v = r.uniform(-1, 1);
        for (double& v : t.v) v = r.uniform(-1, 1);
        return std::function<double()>([&aff, x, t]() mutable {
          nn::Tanh th;
          nn::MseLoss mse;
          return mse.forward(th.forward(aff.forward(x)), t);
        });
      },
      {&aff_g});

  nn::Lstm lstm("lstm", 3, 6);
  nn::Affine ro("ro", 6, 1);
  nn::ParamGroup lstm_g{"lstm", nn::Tag::indicator,
                        {lstm.Wx, lstm.Wh, lstm.b, ro.W, ro.b}};
  check(
      "lstm+readout+bce",
      [&](nn::Rng& r) {
        lstm.init_uniform(r);
        ro.init_uniform(r);
        nn::Tensor x{7, 3};
        std::vector<double> y(7), w(7);
        for (double& v : x.v) v = r.uniform(-1, 1);
        for (auto& v : y) v = r.uniform() < 0.3 ? 1.0 : 0.0;
        for (auto& v : w) v = r.uniform(0.2, 1.0);
        return std::function<double()>([&lstm, &ro, x, y, w]() mutable {
          nn::WeightedBceLoss bce;
          const nn::Tensor z = ro.forward(lstm.forward(x));
          return bce.forward(z.v, y, w, 1.0 / 7.0);
        });
      },
      {&lstm_g});

  out << (worst < 1e-5 ? "grad-check PASS" : "grad-check FAIL")
      << " (max rel err " << worst << ")\n";
  return worst < 1e-5 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-guided gradient adjustment for vision+proprioception "
               "behavior cloning: pipeline and tools"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--set may follow the subcommand

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "config file (INI sections)");
  app.add_option("--set", overrides, "override section.key=value (repeatable)");

  std::uint64_t seed = 1;
  std::string demos_path, out_path, seg_path, ckpt_path, mode = "concat";
  std::string base_ckpt, alt_ckpt, dist = "id";
  int n_rollouts = 100, width = 10, stride = 5, episodes = 50;
  bool dry_run = false;

  auto* cmd_gen = app.add_subcommand("gen-demos", "generate expert demonstrations");
  cmd_gen->add_option("--seed", seed);
  cmd_gen->add_option("--out", out_path)->required();

  auto* cmd_seg = app.add_subcommand("segment", "change-point detection on a dataset");
  cmd_seg->add_option("--demos", demos_path)->required();
  cmd_seg->add_option("--out", out_path)->required();

  auto* cmd_ind = app.add_subcommand("train-indicator",
                                     "train the transition indicator");
  cmd_ind->add_option("--demos", demos_path)->required();
  cmd_ind->add_option("--seg", seg_path)->required();
  cmd_ind->add_option("--out", out_path)->required();
  cmd_ind->add_option("--seed", seed);

  auto* cmd_pol = app.add_subcommand("train-policy", "behavior-clone a policy");
  cmd_pol->add_option("--mode", mode,
                      "vision|concat|gap|mask|fixed|smooth");
  cmd_pol->add_option("--demos", demos_path)->required();
  cmd_pol->add_option("--indicator", ckpt_path, "indicator checkpoint (gap mode)");
  cmd_pol->add_option("--seg", seg_path, "segmentation results (smooth mode)");
  cmd_pol->add_option("--out", out_path)->required();
  cmd_pol->add_option("--seed", seed);

  auto* cmd_eval = app.add_subcommand("evaluate", "closed-loop policy rollouts");
  cmd_eval->add_option("--policy", ckpt_path)->required();
  cmd_eval->add_option("--dist", dist, "id|ood");
  cmd_eval->add_option("--n", n_rollouts);
  cmd_eval->add_option("--seed", seed);
  cmd_eval->add_option("--out", out_path)->required();

  auto* cmd_int = app.add_subcommand("intervene",
                                     "windowed action-substitution experiment");
  cmd_int->add_option("--base", base_ckpt)->required();
  cmd_int->add_option("--alt", alt_ckpt)->required();
  cmd_int->add_option("--width", width);
  cmd_int->add_option("--stride", stride);
  cmd_int->add_option("--episodes", episodes);
  cmd_int->add_option("--seed", seed);
  cmd_int->add_option("--out", out_path)->required();

  auto* cmd_probe = app.add_subcommand("probe",
                                       "linear probe of frozen vision features");
  cmd_probe->add_option("--policy", ckpt_path)->required();
  cmd_probe->add_option("--demos", demos_path)->required();
  cmd_probe->add_option("--out", out_path)->required();
  cmd_probe->add_option("--seed", seed);

  auto* cmd_gc = app.add_subcommand("grad-check",
                                    "finite-difference gradient verification");

  auto* cmd_run = app.add_subcommand("run", "full pipeline (cached stages)");
  cmd_run->add_flag("--dry-run", dry_run, "print the stage plan and exit");

  std::string sweep_param;
  std::vector<std::string> sweep_values;
  auto* cmd_sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  cmd_sweep->add_option("--param", sweep_param)->required();
  cmd_sweep->add_option("--values", sweep_values)->required();

  std::string report_dir;
  auto* cmd_report = app.add_subcommand("report", "aggregate completed cells");
  cmd_report->add_option("--dir", report_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    using namespace gap;
    const cfg::KvConfig kv = make_config(config_path, overrides);

    if (cmd_gen->parsed()) {
      const sim::EnvConfig env = pipe::env_from(kv);
      traj::save_dataset(sim::gen_demos(env, kv.get_int("env.demos"), seed),
                         out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (cmd_seg->parsed()) {
      const traj::Dataset ds = traj::load_dataset(demos_path);
      pipe::write_seg_results(out_path,
                              pipe::segment_dataset(ds, pipe::seg_params_from(kv)),
                              kv);
      std::cout << "wrote " << out_path << "\n";
    } else if (cmd_ind->parsed()) {
      const traj::Dataset ds = traj::load_dataset(demos_path);
      const auto indices = pipe::read_seg_indices(seg_path);
      if (indices.size() != ds.trajectories.size())
        throw ConfigError("segmentation results do not match dataset");
      std::vector<ind::LabeledDeltas> data;
      for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
        data.emplace_back(ind::delta_tensor(ds.trajectories[i]),
                          ind::build_labels(indices[i],
                                            ds.trajectories[i].length(),
                                            kv.get_int("indicator.window"),
                                            kv.get_double("indicator.w_low")));
      ind::IndicatorModel model =
          ind::train_indicator(data, pipe::indicator_hyper_from(kv, seed));
      ind::save_indicator(model, out_path);
      pipe::write_text_atomic(out_path + ".metrics.jsonl", [&] {
        std::string lines;
        for (std::size_t e = 0; e < model.loss_curve.size(); ++e) {
          json r;
          r["epoch"] = e;
          r["loss"] = model.loss_curve[e];
          lines += r.dump() + "\n";
        }
        return lines;
      }());
      std::cout << "wrote " << out_path << " (final loss " << model.final_loss
                << ")\n";
    } else if (cmd_pol->parsed()) {
      const traj::Dataset ds = traj::load_dataset(demos_path);
      const auto seg_indices = seg_path.empty()
                                   ? std::vector<std::vector<int>>{}
                                   : pipe::read_seg_indices(seg_path);
      const auto rho = pipe::rho_for_mode(mode, ds, kv, ckpt_path, seg_indices);
      policy::TrainResult tr = policy::bc_train(
          ds, pipe::policy_config_from(kv, ds.schema, mode),
          pipe::train_config_from(kv, seed, mode), rho.empty() ? nullptr : &rho);
      policy::save_policy(tr.policy, mode, out_path);
      std::cout << "wrote " << out_path << " (final loss "
                << tr.epoch_loss.back() << ")\n";
    } else if (cmd_eval->parsed()) {
      policy::VPPolicy pol = policy::load_policy(ckpt_path);
      policy::PolicyRollout roll(pol);
      const sim::EvalResult ev =
          sim::evaluate(pipe::env_from(kv), roll, n_rollouts,
                        dist == "ood" ? sim::Dist::ood : sim::Dist::id, seed);
      std::string lines;
      for (const sim::EpisodeLog& ep : ev.episodes) {
        json r;
        r["seed"] = ep.seed;
        r["dist"] = dist;
        r["success"] = ep.success;
        r["steps"] = ep.steps;
        lines += r.dump() + "\n";
      }
      pipe::write_text_atomic(out_path, lines);
      std::cout << "success rate " << ev.success_rate << " over " << n_rollouts
                << " rollouts (" << dist << ")\n";
    } else if (cmd_int->parsed()) {
      policy::VPPolicy base = policy::load_policy(base_ckpt);
      policy::VPPolicy alt = policy::load_policy(alt_ckpt);
      policy::PolicyRollout base_roll(base), alt_roll(alt);
      const sim::InterventionResult res = sim::intervention_experiment(
          pipe::env_from(kv), base_roll, alt_roll, width, stride, episodes, seed);
      std::string tsv = "t0\tsuccess_rate\tbaseline\n";
      for (std::size_t w = 0; w < res.starts.size(); ++w)
        tsv += std::to_string(res.starts[w]) + "\t" +
               std::to_string(res.rate_per_start[w]) + "\t" +
               std::to_string(res.baseline_rate) + "\n";
      pipe::write_text_atomic(out_path, tsv);
      const sim::InterventionSummary sum = sim::summarize(res);
      std::cout << "baseline " << sum.baseline << ", transition windows "
                << sum.transition_rate << ", consistent windows "
                << sum.consistent_rate << "\n";
    } else if (cmd_probe->parsed()) {
      policy::VPPolicy donor = policy::load_policy(ckpt_path);
      const traj::Dataset ds = traj::load_dataset(demos_path);
      policy::TrainResult probe = policy::linear_probe(
          donor.vision_group, ds, donor.cfg,
          pipe::train_config_from(kv, seed, "concat"));
      policy::save_policy(probe.policy, "probe", out_path);
      std::cout << "wrote " << out_path << " (final loss "
                << probe.epoch_loss.back() << ")\n";
    } else if (cmd_gc->parsed()) {
      return run_grad_check(std::cout);
    } else if (cmd_run->parsed()) {
      const json rep = pipe::run_pipeline(kv, dry_run, std::cout);
      if (!dry_run)
        std::cout << "report written under " << kv.get("run.out_dir")
                  << "/report\n";
    } else if (cmd_sweep->parsed()) {
      pipe::run_sweep(kv, sweep_param, sweep_values, std::cout);
      std::cout << "sweep written under " << kv.get("run.out_dir") << "\n";
    } else if (cmd_report->parsed()) {
      pipe::build_report(report_dir, std::cout);
      std::cout << "report written under " << report_dir << "/report\n";
    }
    return gap::exit_code::ok;
  } catch (const gap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return gap::exit_code::config;
  } catch (const gap::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return gap::exit_code::format;
  } catch (const gap::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return gap::exit_code::training;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gap::exit_code::failure;
  }
}
