#include "gap/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gap/errors.hpp"
#include "gap/nn/checkpoint.hpp"

namespace gap::cfg {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

const std::map<std::string, std::string>& default_table() {
  static const std::map<std::string, std::string> table = {
      {"run.task", "translate"},
      {"run.seeds", "1,2,3,4,5"},
      {"run.modes", "vision,concat,gap,mask,fixed,smooth"},
      {"run.out_dir", "gap-out"},
      {"run.cache_dir", ""},  // empty: $GAP_CACHE_ROOT, else <out_dir>/cache
      {"env.demos", "100"},
      {"env.grid", "16"},
      {"env.max_steps", "80"},
      {"env.action_scale", "0.05"},
      {"env.grasp_radius", "0.05"},
      {"env.place_radius", "0.05"},
      {"env.blob_sigma", "1.0"},
      {"seg.alpha", "1.0"},
      {"seg.beta", "0.002"},
      {"seg.objective", "penalty"},  // penalty | k
      {"seg.penalty", "1.0"},
      {"seg.k", "3"},
      {"seg.min_phase_len", "3"},
      {"seg.distance", "gap"},  // gap | cotpc
      {"seg.mismatch_penalty", "false"},
      {"indicator.window", "3"},
      {"indicator.w_low", "0.2"},
      {"indicator.hidden", "32"},
      {"indicator.epochs", "200"},
      {"indicator.lr", "0.001"},
      {"indicator.batch", "32"},
      {"train.epochs", "100"},
      {"train.adjust_epochs", "50"},
      {"train.lambda", "0.3"},
      {"train.batch", "128"},
      {"train.lr", "0.001"},
      {"train.optimizer", "adam"},
      {"train.history", "2"},
      {"train.chunk", "1"},
      {"train.vision_hidden", "64"},
      {"train.proprio_hidden", "32"},
      {"train.head_hidden", "64"},
      {"train.fixed_rho", "0.3"},
      {"train.smooth_sigma", "2.0"},
      {"train.mask_prob", "0.3"},
      {"train.adjust_rule", "literal"},  // literal | one_minus_lambda_rho
      {"train.per_sample_adjust", "false"},
      {"train.adjust_head_columns", "false"},
      {"eval.rollouts_id", "100"},
      {"eval.rollouts_ood", "100"},
  };
  return table;
}

}  // namespace

KvConfig KvConfig::defaults() {
  KvConfig c;
  c.values_ = default_table();
  return c;
}

KvConfig KvConfig::from_file(const std::string& path) {
  KvConfig c = defaults();
  c.apply_file(path);
  return c;
}

void KvConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + " line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key =
        (section.empty() ? "" : section + ".") + trim(s.substr(0, eq));
    set(key, trim(s.substr(eq + 1)));
  }
}

void KvConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be section.key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KvConfig::set(const std::string& key, const std::string& value) {
  if (!default_table().count(key))
    throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

const std::string& KvConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

double KvConfig::get_double(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number: " + get(key));
  }
}

int KvConfig::get_int(const std::string& key) const {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer: " + get(key));
  }
}

bool KvConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::uint64_t KvConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an unsigned int: " + get(key));
  }
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::vector<std::uint64_t> KvConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const std::string& s : get_list(key)) {
    try {
      out.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " has a non-integer entry: " + s);
    }
  }
  return out;
}

std::string KvConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string KvConfig::canonical_subset(
    const std::vector<std::string>& sections) const {
  std::string out;
  for (const auto& [k, v] : values_)
    for (const std::string& s : sections)
      if (k.rfind(s + ".", 0) == 0) {
        out += k + "=" + v + "\n";
        break;
      }
  return out;
}

std::string hash_bytes(const std::string& bytes) {
  const std::uint64_t h = nn::fnv1a(bytes);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string KvConfig::hash() const { return hash_bytes(canonical()); }

}  // namespace gap::cfg
