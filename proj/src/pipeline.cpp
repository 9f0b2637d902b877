#include "gap/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gap/metrics.hpp"
#include "gap/nn/checkpoint.hpp"

namespace fs = std::filesystem;

namespace gap::pipe {

using nlohmann::json;

sim::EnvConfig env_from(const cfg::KvConfig& kv) {
  sim::EnvConfig c = sim::EnvConfig::for_task(kv.get("run.task"));
  c.grid = kv.get_int("env.grid");
  c.max_steps = kv.get_int("env.max_steps");
  c.action_scale = kv.get_double("env.action_scale");
  c.grasp_radius = kv.get_double("env.grasp_radius");
  c.place_radius = kv.get_double("env.place_radius");
  c.blob_sigma_cells = kv.get_double("env.blob_sigma");
  return c;
}

seg::SegParams seg_params_from(const cfg::KvConfig& kv) {
  seg::SegParams p;
  p.orientation_weight = kv.get_double("seg.alpha");
  p.opening_weight = kv.get_double("seg.beta");
  const std::string obj = kv.get("seg.objective");
  if (obj == "penalty")
    p.change_penalty = kv.get_double("seg.penalty");
  else if (obj == "k")
    p.k_changes = kv.get_int("seg.k");
  else
    throw ConfigError("seg.objective must be penalty or k");
  p.min_phase_len = kv.get_int("seg.min_phase_len");
  const std::string dist = kv.get("seg.distance");
  if (dist == "gap")
    p.mode = seg::DistanceMode::gap;
  else if (dist == "cotpc")
    p.mode = seg::DistanceMode::cotpc;
  else
    throw ConfigError("seg.distance must be gap or cotpc");
  p.opening_mismatch_penalty = kv.get_bool("seg.mismatch_penalty");
  return p;
}

ind::IndicatorHyper indicator_hyper_from(const cfg::KvConfig& kv,
                                         std::uint64_t seed) {
  ind::IndicatorHyper h;
  h.epochs = kv.get_int("indicator.epochs");
  h.lr = kv.get_double("indicator.lr");
  h.hidden_dim = kv.get_int("indicator.hidden");
  h.batch_size = kv.get_int("indicator.batch");
  h.seed = seed;
  return h;
}

bool mode_known(const std::string& mode) {
  return mode == "vision" || mode == "concat" || mode == "gap" ||
         mode == "mask" || mode == "fixed" || mode == "smooth";
}

policy::PolicyConfig policy_config_from(const cfg::KvConfig& kv,
                                        const traj::Schema& schema,
                                        const std::string& mode) {
  if (!mode_known(mode)) throw ConfigError("unknown training mode: " + mode);
  policy::PolicyConfig c = policy::PolicyConfig::for_dataset(
      schema, mode == "vision" ? policy::FusionMode::vision_only
                               : policy::FusionMode::concat);
  c.history = kv.get_int("train.history");
  c.chunk = kv.get_int("train.chunk");
  c.vision_hidden = kv.get_int("train.vision_hidden");
  c.proprio_hidden = kv.get_int("train.proprio_hidden");
  c.head_hidden = kv.get_int("train.head_hidden");
  return c;
}

policy::TrainConfig train_config_from(const cfg::KvConfig& kv,
                                      std::uint64_t seed,
                                      const std::string& mode) {
  if (!mode_known(mode)) throw ConfigError("unknown training mode: " + mode);
  policy::TrainConfig t;
  t.epochs = kv.get_int("train.epochs");
  t.adjust_epochs = kv.get_int("train.adjust_epochs");
  t.adjust_strength = kv.get_double("train.lambda");
  t.batch_size = kv.get_int("train.batch");
  t.lr = kv.get_double("train.lr");
  const std::string opt = kv.get("train.optimizer");
  if (opt == "adam")
    t.optimizer = nn::OptKind::adam;
  else if (opt == "sgd")
    t.optimizer = nn::OptKind::sgd;
  else
    throw ConfigError("train.optimizer must be adam or sgd");
  t.seed = seed;
  if (mode == "gap")
    t.rho_source = policy::RhoMode::learned;
  else if (mode == "smooth")
    t.rho_source = policy::RhoMode::smooth;
  else if (mode == "fixed")
    t.rho_source = policy::RhoMode::fixed;
  else
    t.rho_source = policy::RhoMode::none;
  t.mask_prob = mode == "mask" ? kv.get_double("train.mask_prob") : 0.0;
  const std::string rule = kv.get("train.adjust_rule");
  if (rule == "literal")
    t.adjust_rule = policy::AdjustRule::literal;
  else if (rule == "one_minus_lambda_rho")
    t.adjust_rule = policy::AdjustRule::one_minus_lambda_rho;
  else
    throw ConfigError("train.adjust_rule must be literal or one_minus_lambda_rho");
  t.per_sample_adjust = kv.get_bool("train.per_sample_adjust");
  t.adjust_head_columns = kv.get_bool("train.adjust_head_columns");
  return t;
}

std::vector<seg::SegmentationResult> segment_dataset(const traj::Dataset& ds,
                                                     const seg::SegParams& p) {
  std::vector<seg::SegmentationResult> out;
  out.reserve(ds.trajectories.size());
  for (const traj::Trajectory& t : ds.trajectories)
    out.push_back(seg::segment_dp(t, p));
  return out;
}

void write_seg_results(const std::string& path,
                       const std::vector<seg::SegmentationResult>& results,
                       const cfg::KvConfig& kv) {
  std::ostringstream out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    json r;
    r["traj_id"] = i;
    r["change_indices"] = results[i].change_indices;
    r["total_cost"] = results[i].total_cost;
    r["params_echo"] = kv.canonical_subset({"seg"});
    out << r.dump() << "\n";
  }
  write_text_atomic(path, out.str());
}

std::vector<std::vector<int>> read_seg_indices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open segmentation results: " + path);
  std::vector<std::vector<int>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json r = json::parse(line, nullptr, false);
    if (r.is_discarded() || !r.contains("change_indices"))
      throw FormatError(path + " line " + std::to_string(line_no) +
                        ": bad segmentation record");
    out.push_back(r["change_indices"].get<std::vector<int>>());
  }
  return out;
}

std::vector<ind::IndicatorSeries> rho_for_mode(
    const std::string& mode, const traj::Dataset& demos,
    const cfg::KvConfig& kv, const std::string& indicator_ckpt,
    const std::vector<std::vector<int>>& seg_indices) {
  std::vector<ind::IndicatorSeries> out;
  if (mode == "gap") {
    ind::IndicatorModel model = ind::load_indicator(indicator_ckpt);
    for (const traj::Trajectory& t : demos.trajectories)
      out.push_back(ind::predict_rho(model, t));
  } else if (mode == "smooth") {
    if (seg_indices.size() != demos.trajectories.size())
      throw ConfigError("smooth mode: segmentation does not match dataset");
    const double sigma = kv.get_double("train.smooth_sigma");
    for (std::size_t i = 0; i < demos.trajectories.size(); ++i)
      out.push_back(ind::smooth_rho(seg_indices[i],
                                    demos.trajectories[i].length(), sigma));
  } else if (mode == "fixed") {
    const double v = kv.get_double("train.fixed_rho");
    for (const traj::Trajectory& t : demos.trajectories)
      out.push_back(ind::fixed_rho(v, t.length()));
  }
  return out;
}

double indicator_auc(ind::IndicatorModel& model, const traj::Dataset& demos,
                     int window) {
  // Detection with +-window tolerance: a state's score for "a boundary lies
  // within the window" is the strongest indicator value inside that window;
  // labels come from the recorded boundaries with the same tolerance.
  std::vector<double> scores;
  std::vector<int> labels;
  for (const traj::Trajectory& t : demos.trajectories) {
    const ind::IndicatorSeries s = ind::predict_rho(model, t);
    const int n = t.length();
    for (int i = 0; i < n; ++i) {
      double best = 0.0;
      for (int k = std::max(0, i - window); k <= std::min(n - 1, i + window); ++k)
        best = std::max(best, s.values[static_cast<std::size_t>(k)]);
      int dist = n;
      for (const int c : t.meta.transitions) dist = std::min(dist, std::abs(i - c));
      scores.push_back(best);
      labels.push_back(dist <= window ? 1 : 0);
    }
  }
  return metrics::roc_auc(scores, labels);
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ArgumentError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  fs::rename(tmp, target);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string cache_root(const cfg::KvConfig& kv) {
  std::string dir = kv.get("run.cache_dir");
  if (dir.empty()) {
    if (const char* env = std::getenv("GAP_CACHE_ROOT")) dir = env;
  }
  if (dir.empty()) dir = kv.get("run.out_dir") + "/cache";
  return dir;
}

namespace {

// A cached stage: content-keyed directory produced atomically (build into a
// temp dir, rename into place), safe under concurrent writers.
class StageCache {
public:
  explicit StageCache(std::string root) : root_(std::move(root)) {}

  bool exists(const std::string& stage, const std::string& key_hash) const {
    return fs::exists(fs::path(root_) / (stage + "-" + key_hash) / ".done");
  }

  std::string dir_of(const std::string& stage, const std::string& key_hash) const {
    return (fs::path(root_) / (stage + "-" + key_hash)).string();
  }

  template <typename Producer>
  std::string ensure(const std::string& stage, const std::string& key_hash,
                     Producer&& produce) {
    const fs::path final_dir = fs::path(root_) / (stage + "-" + key_hash);
    if (fs::exists(final_dir / ".done")) return final_dir.string();
    fs::path tmp = final_dir;
    tmp += ".tmp-" + std::to_string(::getpid());
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    produce(tmp.string());
    {
      std::ofstream marker(tmp / ".done");
      marker << key_hash << "\n";
    }
    std::error_code ec;
    fs::rename(tmp, final_dir, ec);
    if (ec) {
      // Lost a race with another writer; its output is equivalent.
      if (!fs::exists(final_dir / ".done"))
        throw std::runtime_error("cache: cannot publish " + final_dir.string() +
                                 ": " + ec.message());
      fs::remove_all(tmp);
    }
    return final_dir.string();
  }

private:
  std::string root_;
};

template <typename Fn>
auto stage_guard(const std::string& stage, std::uint64_t seed,
                 const std::string& repro, Fn&& fn) {
  const std::string where =
      "stage " + stage + " (seed " + std::to_string(seed) + ")";
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what() + "; reproduce: " + repro);
  } catch (const FormatError& e) {
    throw FormatError(where + ": " + e.what() + "; reproduce: " + repro);
  } catch (const TrainingError& e) {
    throw TrainingError(where + ": " + e.what() + "; reproduce: " + repro);
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what() + "; reproduce: " + repro);
  }
}

void write_metrics_lines(const std::string& path,
                         const std::vector<double>& losses,
                         const std::vector<double>& rho_means) {
  std::ostringstream out;
  for (std::size_t e = 0; e < losses.size(); ++e) {
    json r;
    r["epoch"] = e;
    r["train_loss"] = losses[e];
    if (!rho_means.empty()) r["rho_mean"] = rho_means[e];
    out << r.dump() << "\n";
  }
  write_text_atomic(path, out.str());
}

struct StageKeys {
  std::string demos, segmentation, indicator;
  std::map<std::string, std::string> policy;  // per mode
};

}  // namespace

nlohmann::json run_pipeline(const cfg::KvConfig& kv, bool dry_run,
                            std::ostream& log) {
  const std::vector<std::uint64_t> seeds = kv.get_u64_list("run.seeds");
  const std::vector<std::string> modes = kv.get_list("run.modes");
  if (seeds.empty()) throw ConfigError("run.seeds must be non-empty");
  if (modes.empty()) throw ConfigError("run.modes must be non-empty");
  for (const std::string& m : modes)
    if (!mode_known(m)) throw ConfigError("unknown mode in run.modes: " + m);

  const std::string out_dir = kv.get("run.out_dir");
  const std::string cache_dir = cache_root(kv);
  StageCache cache(cache_dir);
  const std::string repro = "gap run --set run.out_dir=" + out_dir;

  const std::string env_sig = kv.canonical_subset({"env"}) + "task=" + kv.get("run.task");
  const std::string seg_sig = kv.canonical_subset({"seg"});
  const std::string ind_sig = kv.canonical_subset({"indicator"});
  const std::string train_sig = kv.canonical_subset({"train"});
  const std::string eval_sig = kv.canonical_subset({"eval"});

  if (dry_run) log << "dry run: stage plan\n";
  if (!dry_run) {
    fs::create_directories(out_dir);
    fs::create_directories(cache_dir);
    fs::create_directories(fs::path(out_dir) / "cells");
  }

  const sim::EnvConfig env = env_from(kv);
  const seg::SegParams segp = seg_params_from(kv);

  const bool needs_indicator =
      std::find(modes.begin(), modes.end(), "gap") != modes.end();
  const bool needs_seg =
      needs_indicator ||
      std::find(modes.begin(), modes.end(), "smooth") != modes.end();

  for (const std::uint64_t seed : seeds) {
    const std::string seed_str = std::to_string(seed);

    const std::string demos_key =
        cfg::hash_bytes("demos|" + env_sig + "|seed=" + seed_str);
    const std::string seg_key =
        cfg::hash_bytes("segment|" + demos_key + "|" + seg_sig);
    const std::string ind_key =
        cfg::hash_bytes("indicator|" + seg_key + "|" + ind_sig);

    if (dry_run) {
      log << "  seed " << seed << ": demos["
          << (cache.exists("demos", demos_key) ? "cached" : "build") << "]";
      if (needs_seg)
        log << " segment[" << (cache.exists("segment", seg_key) ? "cached" : "build")
            << "]";
      if (needs_indicator)
        log << " indicator["
            << (cache.exists("indicator", ind_key) ? "cached" : "build") << "]";
      for (const std::string& mode : modes) {
        const std::string pol_key = cfg::hash_bytes(
            "policy|" + demos_key + "|" + (mode == "gap" ? ind_key : "") + "|" +
            (mode == "smooth" ? seg_key : "") + "|" + train_sig + "|mode=" + mode);
        log << " " << mode << "["
            << (cache.exists("policy", pol_key) ? "cached" : "build") << "]";
      }
      log << "\n";
      continue;
    }

    const std::string demos_dir =
        stage_guard("gen-demos", seed, repro, [&] {
          return cache.ensure("demos", demos_key, [&](const std::string& dir) {
            const traj::Dataset ds =
                sim::gen_demos(env, kv.get_int("env.demos"), seed);
            traj::save_dataset(ds, dir + "/demos.jsonl");
          });
        });
    const std::string demos_path = demos_dir + "/demos.jsonl";

    std::string seg_path;
    if (needs_seg) {
      const std::string seg_dir = stage_guard("segment", seed, repro, [&] {
        return cache.ensure("segment", seg_key, [&](const std::string& dir) {
          const traj::Dataset ds = traj::load_dataset(demos_path);
          write_seg_results(dir + "/seg.jsonl", segment_dataset(ds, segp), kv);
        });
      });
      seg_path = seg_dir + "/seg.jsonl";
    }

    std::string indicator_path;
    if (needs_indicator) {
      const std::string ind_dir = stage_guard("train-indicator", seed, repro, [&] {
        return cache.ensure("indicator", ind_key, [&](const std::string& dir) {
          const traj::Dataset ds = traj::load_dataset(demos_path);
          const auto indices = read_seg_indices(seg_path);
          std::vector<ind::LabeledDeltas> data;
          for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
            data.emplace_back(
                ind::delta_tensor(ds.trajectories[i]),
                ind::build_labels(indices[i], ds.trajectories[i].length(),
                                  kv.get_int("indicator.window"),
                                  kv.get_double("indicator.w_low")));
          ind::IndicatorModel model =
              ind::train_indicator(data, indicator_hyper_from(kv, seed));
          ind::save_indicator(model, dir + "/indicator.ckpt");
          write_metrics_lines(dir + "/metrics.jsonl", model.loss_curve, {});
        });
      });
      indicator_path = ind_dir + "/indicator.ckpt";
    }

    // Per-seed diagnostics cells.
    {
      const traj::Dataset ds = traj::load_dataset(demos_path);
      if (needs_seg) {
        const auto indices = read_seg_indices(seg_path);
        json cell;
        cell["seed"] = seed;
        double changes = 0;
        for (const auto& I : indices) changes += static_cast<double>(I.size());
        cell["mean_changes"] = changes / static_cast<double>(indices.size());
        cell["n_traj"] = indices.size();
        write_text_atomic((fs::path(out_dir) / "cells" /
                           ("seg-seed" + seed_str + ".json")).string(),
                          cell.dump(2) + "\n");
      }
      if (needs_indicator) {
        ind::IndicatorModel model = ind::load_indicator(indicator_path);
        json cell;
        cell["seed"] = seed;
        cell["auc"] = indicator_auc(model, ds, kv.get_int("indicator.window"));
        write_text_atomic((fs::path(out_dir) / "cells" /
                           ("indicator-seed" + seed_str + ".json")).string(),
                          cell.dump(2) + "\n");
      }
    }

    for (const std::string& mode : modes) {
      const std::string pol_key = cfg::hash_bytes(
          "policy|" + demos_key + "|" + (mode == "gap" ? ind_key : "") + "|" +
          (mode == "smooth" ? seg_key : "") + "|" + train_sig + "|mode=" + mode);
      const std::string pol_dir =
          stage_guard("train-policy:" + mode, seed, repro, [&] {
            return cache.ensure("policy", pol_key, [&](const std::string& dir) {
              const traj::Dataset ds = traj::load_dataset(demos_path);
              const auto seg_indices = mode == "smooth"
                                           ? read_seg_indices(seg_path)
                                           : std::vector<std::vector<int>>{};
              const auto rho =
                  rho_for_mode(mode, ds, kv, indicator_path, seg_indices);
              const policy::PolicyConfig pcfg =
                  policy_config_from(kv, ds.schema, mode);
              const policy::TrainConfig tcfg = train_config_from(kv, seed, mode);
              policy::TrainResult tr =
                  policy::bc_train(ds, pcfg, tcfg, rho.empty() ? nullptr : &rho);
              policy::save_policy(tr.policy, mode, dir + "/policy.ckpt");
              write_metrics_lines(dir + "/metrics.jsonl", tr.epoch_loss,
                                  tr.epoch_rho_mean);
            });
          });

      // training-cell copy for the report, plus a pointer to the checkpoint
      write_text_atomic(
          (fs::path(out_dir) / "cells" /
           ("train-" + mode + "-seed" + seed_str + ".jsonl")).string(),
          read_text(pol_dir + "/metrics.jsonl"));
      {
        json ptr;
        ptr["mode"] = mode;
        ptr["seed"] = seed;
        ptr["ckpt"] = pol_dir + "/policy.ckpt";
        write_text_atomic(
            (fs::path(out_dir) / "cells" /
             ("policy-" + mode + "-seed" + seed_str + ".json")).string(),
            ptr.dump() + "\n");
      }

      for (const std::string dist : {"id", "ood"}) {
        const int n = dist == std::string("id") ? kv.get_int("eval.rollouts_id")
                                                : kv.get_int("eval.rollouts_ood");
        const std::string eval_key = cfg::hash_bytes("eval|" + pol_key + "|" +
                                                     eval_sig + "|dist=" + dist);
        const std::string eval_dir =
            stage_guard("evaluate:" + mode + ":" + dist, seed, repro, [&] {
              return cache.ensure("eval", eval_key, [&](const std::string& dir) {
                policy::VPPolicy pol = policy::load_policy(pol_dir + "/policy.ckpt");
                policy::PolicyRollout roll(pol);
                const sim::EvalResult ev = sim::evaluate(
                    env, roll, n, dist == std::string("id") ? sim::Dist::id
                                                            : sim::Dist::ood,
                    seed);
                std::ostringstream lines;
                for (const sim::EpisodeLog& ep : ev.episodes) {
                  json r;
                  r["seed"] = ep.seed;
                  r["dist"] = dist;
                  r["success"] = ep.success;
                  r["steps"] = ep.steps;
                  lines << r.dump() << "\n";
                }
                write_text_atomic(dir + "/episodes.jsonl", lines.str());
                json s;
                s["success_rate"] = ev.success_rate;
                s["n"] = n;
                write_text_atomic(dir + "/summary.json", s.dump(2) + "\n");
              });
            });

        json cell;
        cell["mode"] = mode;
        cell["seed"] = seed;
        cell["dist"] = dist;
        cell["n"] = n;
        json episodes = json::array();
        std::istringstream lines(read_text(eval_dir + "/episodes.jsonl"));
        std::string line;
        while (std::getline(lines, line))
          if (!line.empty()) episodes.push_back(json::parse(line));
        cell["episodes"] = episodes;
        write_text_atomic(
            (fs::path(out_dir) / "cells" /
             ("eval-" + mode + "-seed" + seed_str + "-" + dist + ".json")).string(),
            cell.dump() + "\n");
      }
    }
  }

  if (dry_run) return json{{"dry_run", true}};
  return build_report(out_dir, log);
}

nlohmann::json build_report(const std::string& out_dir, std::ostream& log) {
  const fs::path cells = fs::path(out_dir) / "cells";
  if (!fs::exists(cells))
    throw ConfigError("report: no cells directory under " + out_dir);

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(cells))
    names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());

  json report;
  report["version"] = "gap-artifact-1";
  json by_cell = json::object();
  // mode -> dist -> list of (seed, rate)
  std::map<std::string, std::map<std::string, std::vector<std::pair<std::uint64_t, double>>>>
      table;
  std::vector<std::string> missing;

  for (const std::string& name : names) {
    const std::string path = (cells / name).string();
    if (name.rfind("eval-", 0) == 0) {
      json cell = json::parse(read_text(path), nullptr, false);
      if (cell.is_discarded()) {
        missing.push_back(name);
        continue;
      }
      // Success rate recomputed from the raw per-episode log.
      const auto& eps = cell["episodes"];
      double wins = 0;
      for (const auto& e : eps) wins += e["success"].get<bool>() ? 1.0 : 0.0;
      const double rate = eps.empty() ? 0.0 : wins / static_cast<double>(eps.size());
      const std::string mode = cell["mode"].get<std::string>();
      const std::string dist = cell["dist"].get<std::string>();
      table[mode][dist].push_back({cell["seed"].get<std::uint64_t>(), rate});
      by_cell[name] = {{"mode", mode},
                       {"dist", dist},
                       {"seed", cell["seed"].get<std::uint64_t>()},
                       {"success_rate", rate},
                       {"n", eps.size()}};
    } else if (name.rfind("seg-", 0) == 0 || name.rfind("indicator-", 0) == 0) {
      by_cell[name] = json::parse(read_text(path));
    }
  }

  json summary = json::object();
  std::ostringstream tsv;
  tsv << "mode\tdist\tmean\tstd\tn_seeds\trates\n";
  for (auto& [mode, dists] : table)
    for (auto& [dist, rows] : dists) {
      std::sort(rows.begin(), rows.end());
      std::vector<double> rates;
      for (const auto& [s, r] : rows) rates.push_back(r);
      const double m = metrics::mean(rates);
      const double sd = metrics::sample_std(rates);
      summary[mode][dist] = {{"mean", m}, {"std", sd}, {"rates", rates}};
      tsv << mode << "\t" << dist << "\t" << m << "\t" << sd << "\t"
          << rates.size() << "\t";
      for (std::size_t i = 0; i < rates.size(); ++i)
        tsv << (i ? "," : "") << rates[i];
      tsv << "\n";
    }
  report["summary"] = summary;
  report["cells"] = by_cell;
  report["missing"] = missing;

  // Series files for plotting: per-mode/seed loss curves.
  fs::create_directories(fs::path(out_dir) / "report");
  for (const std::string& name : names) {
    if (name.rfind("train-", 0) != 0) continue;
    std::istringstream lines(read_text((cells / name).string()));
    std::ostringstream series;
    series << "epoch\ttrain_loss\trho_mean\n";
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const json r = json::parse(line);
      series << r["epoch"].get<int>() << "\t" << r["train_loss"].get<double>()
             << "\t" << (r.contains("rho_mean") ? r["rho_mean"].get<double>() : 0.0)
             << "\n";
    }
    std::string base = name.substr(0, name.size() - 6);  // drop .jsonl
    write_text_atomic(
        (fs::path(out_dir) / "report" / (base + ".tsv")).string(), series.str());
  }

  write_text_atomic((fs::path(out_dir) / "report" / "summary.tsv").string(),
                    tsv.str());
  write_text_atomic((fs::path(out_dir) / "report" / "report.json").string(),
                    report.dump(2) + "\n");
  if (!missing.empty())
    log << "report: " << missing.size() << " unreadable cell(s) skipped\n";
  return report;
}

nlohmann::json run_sweep(const cfg::KvConfig& kv, const std::string& parameter,
                         const std::vector<std::string>& values,
                         std::ostream& log) {
  static const std::map<std::string, std::string> param_keys = {
      {"alpha", "seg.alpha"},         {"beta", "seg.beta"},
      {"lambda", "train.lambda"},     {"x", "train.adjust_epochs"},
      {"mask_prob", "train.mask_prob"}, {"rho_fixed", "train.fixed_rho"},
  };
  const auto it = param_keys.find(parameter);
  if (it == param_keys.end())
    throw ConfigError("sweep: unknown parameter " + parameter);
  if (values.empty()) throw ConfigError("sweep: empty value list");

  const std::string base_out = kv.get("run.out_dir");
  json combined;
  combined["parameter"] = parameter;
  combined["cells"] = json::object();
  std::ostringstream tsv;
  tsv << "value\tmode\tdist\tmean\tstd\n";
  for (const std::string& v : values) {
    cfg::KvConfig point = kv;
    point.set(it->second, v);
    point.set("run.out_dir", base_out + "/sweep-" + parameter + "-" + v);
    log << "sweep " << parameter << "=" << v << "\n";
    const json rep = run_pipeline(point, false, log);
    combined["cells"][v] = rep["summary"];
    for (const auto& [mode, dists] : rep["summary"].items())
      for (const auto& [dist, stats] : dists.items())
        tsv << v << "\t" << mode << "\t" << dist << "\t"
            << stats["mean"].get<double>() << "\t" << stats["std"].get<double>()
            << "\n";
  }
  fs::create_directories(base_out);
  write_text_atomic(base_out + "/sweep-" + parameter + ".tsv", tsv.str());
  write_text_atomic(base_out + "/sweep-" + parameter + ".json",
                    combined.dump(2) + "\n");
  return combined;
}

}  // namespace gap::pipe
