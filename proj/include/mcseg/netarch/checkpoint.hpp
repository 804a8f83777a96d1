#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/netarch/network.hpp"
#include "mcseg/volumes/container.hpp"

// Checkpoint container: text header (network config, named parameter index,
// optional extra key/value entries for trainer state) followed by the raw
// little-endian float32 payloads in index order. Round-trips bit-exactly.

namespace mcseg {

struct CheckpointExtras {
  std::map<std::string, std::string> keys;             // free-form text entries
  std::vector<std::pair<std::string, std::vector<float>>> arrays;  // e.g. optimizer state
};

namespace detail {

inline void write_f32_block(std::ofstream& out, const float* p, std::int64_t count) {
  std::vector<std::uint32_t> le(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) le[i] = to_le_bits(p[i]);
  out.write(reinterpret_cast<const char*>(le.data()), count * 4);
}

inline void read_f32_block(std::ifstream& in, float* p, std::int64_t count) {
  std::vector<std::uint32_t> le(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(le.data()), count * 4);
  require(in.good(), "checkpoint payload truncated");
  for (std::int64_t i = 0; i < count; ++i) p[i] = from_le_bits(le[i]);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, DualDecoderNet<float>& net,
                            const CheckpointExtras* extras = nullptr) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  require(out.good(), "cannot open checkpoint ", path, " for writing");
  const NetworkConfig& cfg = net.config();
  out << "mcseg-checkpoint v1\n";
  out << "levels = " << cfg.levels << "\n";
  out << "channels =";
  for (int c : cfg.channels) out << " " << c;
  out << "\n";
  out << "input_channels = " << cfg.input_channels << "\n";
  out << "output_channels = " << cfg.output_channels << "\n";
  out << "dropout_rate = " << detail::format_double(cfg.dropout_rate) << "\n";
  out << "norm_groups = " << cfg.norm_groups << "\n";
  out << "decoder_b = " << decoder_kind_name(net.decoder_b_kind()) << "\n";
  if (extras)
    for (const auto& [k, v] : extras->keys) out << "extra " << k << " = " << v << "\n";

  std::vector<std::pair<std::string, const std::vector<float>*>> params;
  net.visit_params([&](const std::string& name, std::vector<float>& w, std::vector<float>&) {
    params.emplace_back(name, &w);
  });
  for (const auto& [name, w] : params) out << "param " << name << " " << w->size() << "\n";
  if (extras)
    for (const auto& [name, arr] : extras->arrays)
      out << "param " << name << " " << arr.size() << "\n";
  out << "end-header\n";

  for (const auto& [name, w] : params)
    detail::write_f32_block(out, w->data(), static_cast<std::int64_t>(w->size()));
  if (extras)
    for (const auto& [name, arr] : extras->arrays)
      detail::write_f32_block(out, arr.data(), static_cast<std::int64_t>(arr.size()));
  out.close();
  require(out.good(), "failed writing checkpoint ", path);
}

// Loads the network stored at `path`. Extra entries (optimizer state, rng,
// counters) are returned through `extras` when given; unknown parameter
// names or size mismatches are hard errors.
inline DualDecoderNet<float> load_checkpoint(const std::string& path,
                                             CheckpointExtras* extras = nullptr) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint ", path);
  std::string line;
  std::getline(in, line);
  require(line == "mcseg-checkpoint v1", path, ": not a checkpoint file");

  NetworkConfig cfg;
  cfg.channels.clear();
  DecoderKind kind = DecoderKind::trilinear;
  std::vector<std::pair<std::string, std::int64_t>> index;
  while (std::getline(in, line)) {
    if (line == "end-header") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "param") {
      std::string name;
      std::int64_t count = 0;
      ls >> name >> count;
      require(!ls.fail(), path, ": malformed param line '", line, "'");
      index.emplace_back(name, count);
    } else if (key == "extra") {
      std::string name, eq;
      ls >> name >> eq;
      require(eq == "=", path, ": malformed extra line '", line, "'");
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
      if (extras) extras->keys[name] = rest;
    } else {
      std::string eq;
      ls >> eq;
      require(eq == "=", path, ": malformed header line '", line, "'");
      if (key == "levels") ls >> cfg.levels;
      else if (key == "channels") {
        int c;
        while (ls >> c) cfg.channels.push_back(c);
        ls.clear();
      } else if (key == "input_channels") ls >> cfg.input_channels;
      else if (key == "output_channels") ls >> cfg.output_channels;
      else if (key == "dropout_rate") ls >> cfg.dropout_rate;
      else if (key == "norm_groups") ls >> cfg.norm_groups;
      else if (key == "decoder_b") {
        std::string v;
        ls >> v;
        kind = decoder_kind_from_name(v);
      } else {
        fail(path, ": unknown checkpoint key '", key, "'");
      }
    }
  }
  cfg.validate();

  DualDecoderNet<float> net(cfg, kind, 0);
  std::map<std::string, std::vector<float>*> by_name;
  net.visit_params([&](const std::string& name, std::vector<float>& w, std::vector<float>&) {
    by_name[name] = &w;
  });

  std::size_t matched = 0;
  for (const auto& [name, count] : index) {
    auto it = by_name.find(name);
    if (it != by_name.end()) {
      require(static_cast<std::int64_t>(it->second->size()) == count, path, ": parameter ",
              name, " has ", count, " values, network expects ", it->second->size());
      detail::read_f32_block(in, it->second->data(), count);
      ++matched;
    } else {
      std::vector<float> arr(static_cast<std::size_t>(count));
      detail::read_f32_block(in, arr.data(), count);
      if (extras)
        extras->arrays.emplace_back(name, std::move(arr));
      else
        fail(path, ": checkpoint holds unknown parameter '", name, "'");
    }
  }
  require(matched == by_name.size(), path, ": checkpoint is missing network parameters (",
          matched, " of ", by_name.size(), " present)");
  return net;
}

}  // namespace mcseg
