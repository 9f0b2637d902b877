#include "gap/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gap::traj {

using nlohmann::json;

Motion operator+(const Motion& a, const Motion& b) {
  if (a.dp.size() != b.dp.size() || a.dtheta.size() != b.dtheta.size())
    throw ArgumentError("motion addition: dimension mismatch");
  Motion m = a;
  for (std::size_t k = 0; k < m.dp.size(); ++k) m.dp[k] += b.dp[k];
  for (std::size_t k = 0; k < m.dtheta.size(); ++k) m.dtheta[k] += b.dtheta[k];
  m.dg += b.dg;
  return m;
}

Motion motion_between(const Trajectory& t, int i, int j) {
  const int n = t.length();
  if (i < 0 || j < i || j >= n)
    throw ArgumentError("motion_between: need 0 <= i <= j < N, got i=" +
                        std::to_string(i) + " j=" + std::to_string(j) +
                        " N=" + std::to_string(n));
  const ProprioState& a = t.states[static_cast<std::size_t>(i)];
  const ProprioState& b = t.states[static_cast<std::size_t>(j)];
  Motion m;
  m.dp.resize(a.p.size());
  for (std::size_t k = 0; k < a.p.size(); ++k) m.dp[k] = b.p[k] - a.p[k];
  m.dtheta.resize(a.theta.size());
  for (std::size_t k = 0; k < a.theta.size(); ++k)
    m.dtheta[k] = b.theta[k] - a.theta[k];
  m.dg = b.g - a.g;
  return m;
}

std::vector<Motion> delta_sequence(const Trajectory& t) {
  const int n = t.length();
  if (n < 2) throw ArgumentError("delta_sequence: trajectory length must be >= 2");
  std::vector<Motion> out;
  out.reserve(static_cast<std::size_t>(n - 1));
  for (int i = 0; i + 1 < n; ++i) out.push_back(motion_between(t, i, i + 1));
  return out;
}

void validate(const Dataset& ds) {
  for (std::size_t ti = 0; ti < ds.trajectories.size(); ++ti) {
    const Trajectory& t = ds.trajectories[ti];
    const std::string where = "trajectory " + std::to_string(ti);
    if (t.length() < 2) throw ArgumentError(where + ": N must be >= 2");
    if (t.actions.size() != t.states.size() || t.obs.size() != t.states.size())
      throw ArgumentError(where + ": states/actions/obs lengths differ");
    for (const ProprioState& s : t.states) {
      if (static_cast<int>(s.p.size()) != ds.schema.pos_dim ||
          static_cast<int>(s.theta.size()) != ds.schema.theta_dim)
        throw ArgumentError(where + ": state dimension violates schema");
      if (!(s.g >= 0.0 && s.g <= 1.0))
        throw ArgumentError(where + ": opening degree outside [0,1]");
    }
    for (const auto& a : t.actions)
      if (static_cast<int>(a.size()) != ds.schema.action_dim)
        throw ArgumentError(where + ": action dimension violates schema");
    for (const auto& o : t.obs)
      if (static_cast<int>(o.size()) != ds.schema.obs_dim)
        throw ArgumentError(where + ": obs dimension violates schema");
  }
}

namespace {

json header_json(const Schema& s) {
  json h;
  h["version"] = 1;
  h["D_p"] = s.pos_dim;
  h["D_theta"] = s.theta_dim;
  h["action_dim"] = s.action_dim;
  h["obs_dim"] = s.obs_dim;
  return h;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& why) {
  throw FormatError("line " + std::to_string(line_no) + ": " + why);
}

std::vector<double> num_array(const json& j, std::size_t line_no,
                              const char* field) {
  if (!j.is_array()) fail(line_no, std::string(field) + " is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) fail(line_no, std::string(field) + " has a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  validate(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("save_dataset: cannot open " + path);
  out << header_json(ds.schema).dump() << "\n";
  for (std::size_t ti = 0; ti < ds.trajectories.size(); ++ti) {
    const Trajectory& t = ds.trajectories[ti];
    json meta;
    meta["traj_id"] = ti;
    meta["meta"]["seed"] = t.meta.seed;
    meta["meta"]["task"] = t.meta.task;
    meta["meta"]["dist"] = t.meta.dist;
    meta["meta"]["transitions"] = t.meta.transitions;
    out << meta.dump() << "\n";
    for (int s = 0; s < t.length(); ++s) {
      const std::size_t si = static_cast<std::size_t>(s);
      json rec;
      rec["traj_id"] = ti;
      rec["t"] = s;
      rec["p"] = t.states[si].p;
      if (ds.schema.theta_dim > 0) rec["theta"] = t.states[si].theta;
      rec["g"] = t.states[si].g;
      rec["action"] = t.actions[si];
      rec["obs"] = t.obs[si];
      out << rec.dump() << "\n";
    }
  }
  if (!out) throw ArgumentError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_dataset: cannot open " + path);

  Dataset ds;
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw FormatError("line 1: missing header");
  ++line_no;
  json h = json::parse(line, nullptr, false);
  if (h.is_discarded()) fail(line_no, "header is not valid JSON");
  if (!h.contains("version") || h["version"] != 1)
    fail(line_no, "unsupported or missing version (want 1)");
  for (const char* key : {"D_p", "D_theta", "action_dim", "obs_dim"})
    if (!h.contains(key) || !h[key].is_number_integer())
      fail(line_no, std::string("header missing integer field ") + key);
  ds.schema.pos_dim = h["D_p"].get<int>();
  ds.schema.theta_dim = h["D_theta"].get<int>();
  ds.schema.action_dim = h["action_dim"].get<int>();
  ds.schema.obs_dim = h["obs_dim"].get<int>();

  long cur_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json r = json::parse(line, nullptr, false);
    if (r.is_discarded()) fail(line_no, "record is not valid JSON");
    if (!r.contains("traj_id") || !r["traj_id"].is_number_integer())
      fail(line_no, "record missing integer traj_id");
    const long id = r["traj_id"].get<long>();

    if (r.contains("meta")) {
      if (id != cur_id + 1) fail(line_no, "meta record out of order");
      cur_id = id;
      ds.trajectories.emplace_back();
      const json& m = r["meta"];
      TrajMeta& meta = ds.trajectories.back().meta;
      if (m.contains("seed")) meta.seed = m["seed"].get<std::uint64_t>();
      if (m.contains("task")) meta.task = m["task"].get<std::string>();
      if (m.contains("dist")) meta.dist = m["dist"].get<std::string>();
      if (m.contains("transitions"))
        meta.transitions = m["transitions"].get<std::vector<int>>();
      continue;
    }

    if (!r.contains("t") || !r["t"].is_number_integer())
      fail(line_no, "step record missing integer t");
    if (id == cur_id + 1) {  // file without meta records
      cur_id = id;
      ds.trajectories.emplace_back();
    } else if (id != cur_id) {
      fail(line_no, "step record for unexpected traj_id " + std::to_string(id));
    }
    Trajectory& t = ds.trajectories.back();
    if (r["t"].get<int>() != t.length())
      fail(line_no, "timestep out of order (want " + std::to_string(t.length()) +
                        ")");

    ProprioState s;
    s.p = num_array(r.at("p"), line_no, "p");
    if (ds.schema.theta_dim > 0) {
      if (!r.contains("theta")) fail(line_no, "missing theta");
      s.theta = num_array(r["theta"], line_no, "theta");
    } else if (r.contains("theta")) {
      fail(line_no, "theta present but header says D_theta=0");
    }
    if (!r.contains("g") || !r["g"].is_number()) fail(line_no, "missing g");
    s.g = r["g"].get<double>();
    t.states.push_back(std::move(s));
    t.actions.push_back(num_array(r.at("action"), line_no, "action"));
    t.obs.push_back(num_array(r.at("obs"), line_no, "obs"));

    const ProprioState& back = t.states.back();
    if (static_cast<int>(back.p.size()) != ds.schema.pos_dim)
      fail(line_no, "p dimension mismatches schema");
    if (static_cast<int>(back.theta.size()) != ds.schema.theta_dim)
      fail(line_no, "theta dimension mismatches schema");
    if (static_cast<int>(t.actions.back().size()) != ds.schema.action_dim)
      fail(line_no, "action dimension mismatches schema");
    if (static_cast<int>(t.obs.back().size()) != ds.schema.obs_dim)
      fail(line_no, "obs dimension mismatches schema");
    if (!(back.g >= 0.0 && back.g <= 1.0)) fail(line_no, "g outside [0,1]");
  }

  for (std::size_t ti = 0; ti < ds.trajectories.size(); ++ti)
    if (ds.trajectories[ti].length() < 2)
      throw FormatError("trajectory " + std::to_string(ti) +
                        ": fewer than 2 timesteps");
  return ds;
}

}  // namespace gap::traj
