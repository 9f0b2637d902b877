#include "gap/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace gap::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

void save_checkpoint(const std::vector<ParamGroup>& groups,
                     const nlohmann::json& meta, const std::string& path) {
  nlohmann::json header;
  header["version"] = 1;
  header["meta"] = meta;
  header["groups"] = nlohmann::json::array();
  for (const ParamGroup& g : groups) {
    nlohmann::json jg;
    jg["name"] = g.name;
    jg["tag"] = tag_name(g.tag);
    jg["tensors"] = nlohmann::json::array();
    for (const ParamPtr& p : g.params) {
      nlohmann::json jt;
      jt["name"] = p->name;
      jt["shape"] = p->value.shape;
      jg["tensors"].push_back(jt);
    }
    header["groups"].push_back(jg);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("save_checkpoint: cannot open " + path);
  const std::string head = header.dump() + "\n";
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  std::uint64_t sum = fnv1a(head);
  for (const ParamGroup& g : groups)
    for (const ParamPtr& p : g.params) {
      const auto* bytes = reinterpret_cast<const char*>(p->value.v.data());
      const std::size_t n = p->value.v.size() * sizeof(double);
      out.write(bytes, static_cast<std::streamsize>(n));
      sum = fnv1a(bytes, n, sum);
    }
  out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
  if (!out) throw ArgumentError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_checkpoint: cannot open " + path);
  std::string head;
  if (!std::getline(in, head)) throw FormatError(path + ": missing header line");
  head += "\n";

  nlohmann::json header = nlohmann::json::parse(head, nullptr, false);
  if (header.is_discarded()) throw FormatError(path + ": header is not valid JSON");
  if (!header.contains("version") || header["version"] != 1)
    throw FormatError(path + ": unsupported checkpoint version");

  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  std::uint64_t sum = fnv1a(head);
  for (const auto& jg : header.at("groups")) {
    ParamGroup g;
    g.name = jg.at("name").get<std::string>();
    g.tag = tag_from_name(jg.at("tag").get<std::string>());
    for (const auto& jt : jg.at("tensors")) {
      Tensor t(jt.at("shape").get<std::vector<std::size_t>>());
      auto* bytes = reinterpret_cast<char*>(t.v.data());
      const std::size_t n = t.v.size() * sizeof(double);
      if (!in.read(bytes, static_cast<std::streamsize>(n)))
        throw FormatError(path + ": truncated tensor data for " +
                          jt.at("name").get<std::string>());
      sum = fnv1a(bytes, n, sum);
      g.params.push_back(
          std::make_shared<Param>(jt.at("name").get<std::string>(), std::move(t)));
    }
    ck.groups.push_back(std::move(g));
  }
  std::uint64_t stored = 0;
  if (!in.read(reinterpret_cast<char*>(&stored), sizeof(stored)))
    throw FormatError(path + ": missing checksum trailer");
  if (stored != sum) throw FormatError(path + ": checksum mismatch");
  return ck;
}

}  // namespace gap::nn
