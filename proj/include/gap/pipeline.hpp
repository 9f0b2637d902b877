#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "gap/config.hpp"
#include "gap/indicator.hpp"
#include "gap/policy.hpp"
#include "gap/segmentation.hpp"
#include "gap/simulator.hpp"

namespace gap::pipe {

// Typed views of a KvConfig.
sim::EnvConfig env_from(const cfg::KvConfig& kv);
seg::SegParams seg_params_from(const cfg::KvConfig& kv);
ind::IndicatorHyper indicator_hyper_from(const cfg::KvConfig& kv,
                                         std::uint64_t seed);
policy::PolicyConfig policy_config_from(const cfg::KvConfig& kv,
                                        const traj::Schema& schema,
                                        const std::string& mode);
policy::TrainConfig train_config_from(const cfg::KvConfig& kv,
                                      std::uint64_t seed,
                                      const std::string& mode);

bool mode_known(const std::string& mode);

// Segmentation of every trajectory in a dataset plus JSONL (de)serialization
// of the results ({traj_id, change_indices, total_cost, params_echo}).
std::vector<seg::SegmentationResult> segment_dataset(const traj::Dataset& ds,
                                                     const seg::SegParams& p);
void write_seg_results(const std::string& path,
                       const std::vector<seg::SegmentationResult>& results,
                       const cfg::KvConfig& kv);
std::vector<std::vector<int>> read_seg_indices(const std::string& path);

// Indicator series for a training mode: learned (from a checkpoint), smooth
// (from segmentation indices), fixed, or none (empty vector).
std::vector<ind::IndicatorSeries> rho_for_mode(
    const std::string& mode, const traj::Dataset& demos,
    const cfg::KvConfig& kv, const std::string& indicator_ckpt,
    const std::vector<std::vector<int>>& seg_indices);

// AUC of transition-within-window detection against recorded boundaries.
double indicator_auc(ind::IndicatorModel& model, const traj::Dataset& demos,
                     int window);

// Stage runner with content-keyed caching.  Executes gen-demos -> segment ->
// train-indicator -> train-policy (per mode) -> evaluate (id + ood) and
// aggregates the report.
nlohmann::json run_pipeline(const cfg::KvConfig& kv, bool dry_run,
                            std::ostream& log);

// One pipeline per value of a recognized hyperparameter; cache-shared.
nlohmann::json run_sweep(const cfg::KvConfig& kv, const std::string& parameter,
                         const std::vector<std::string>& values,
                         std::ostream& log);

// Aggregates completed cells under <out_dir>/cells into report files;
// missing cells are listed and a partial report is still produced.
nlohmann::json build_report(const std::string& out_dir, std::ostream& log);

std::string cache_root(const cfg::KvConfig& kv);

void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

}  // namespace gap::pipe
