#include "helmnet/neural/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace helmnet::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void commit(const std::string& tmp, const std::string& dst) {
  std::error_code ec;
  std::filesystem::rename(tmp, dst, ec);
  if (ec) throw ConfigError("checkpoint: cannot rename " + tmp + " to " + dst + ": " + ec.message());
}

}  // namespace

void save_checkpoint(const HelmNet<float>& net, const std::string& path, const Metadata& meta) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const std::string blob = path + ".bin";
  {
    std::ofstream out(blob + ".tmp", std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("checkpoint: cannot write " + blob);
    for (const auto& p : net.parameters())
      out.write(reinterpret_cast<const char*>(p.value.data()), std::streamsize(p.value.numel() * 4));
    for (const auto& b : net.buffers())
      out.write(reinterpret_cast<const char*>(b.value.data()), std::streamsize(b.value.numel() * 4));
    if (!out) throw ConfigError("checkpoint: write failed for " + blob);
  }
  {
    std::ofstream out(path + ".tmp", std::ios::trunc);
    if (!out) throw ConfigError("checkpoint: cannot write " + path);
    const NetConfig& c = net.config();
    out << "helmnet-checkpoint 1\n";
    out << "variant " << to_string(c.variant) << "\n";
    out << "normalize_input " << (c.normalize_input ? 1 : 0) << "\n";
    out.precision(17);
    out << "output_scale " << c.output_scale << "\n";
    out << "seed " << c.seed << "\n";
    out << "architecture_hash " << hex(net.architecture_hash()) << "\n";
    for (const auto& [k, v] : meta) {
      if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
        throw ConfigError("checkpoint: metadata key/value '" + k + "' contains whitespace or newline");
      }
      out << "meta " << k << " " << v << "\n";
    }
    auto shape = [](const Shape& s) {
      return std::to_string(s.n) + " " + std::to_string(s.c) + " " + std::to_string(s.h) + " " +
             std::to_string(s.w);
    };
    for (const auto& p : net.parameters()) out << "param " << p.name << " " << shape(p.value.shape()) << " float32\n";
    for (const auto& b : net.buffers()) out << "buffer " << b.name << " " << shape(b.value.shape()) << " float32\n";
    if (!out) throw ConfigError("checkpoint: write failed for " + path);
  }
  commit(blob + ".tmp", blob);
  commit(path + ".tmp", path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  std::string line, magic;
  std::getline(in, line);
  if (line != "helmnet-checkpoint 1") throw ConfigError("checkpoint: " + path + " is not a checkpoint manifest");
  NetConfig cfg;
  Metadata meta;
  std::string hash;
  struct Entry {
    std::string kind, name;
    Shape shape;
  };
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "variant") {
      std::string v;
      ls >> v;
      cfg.variant = parse_variant(v);
    } else if (key == "normalize_input") {
      int v = 0;
      ls >> v;
      cfg.normalize_input = v != 0;
    } else if (key == "output_scale") {
      ls >> cfg.output_scale;
    } else if (key == "seed") {
      ls >> cfg.seed;
    } else if (key == "architecture_hash") {
      ls >> hash;
    } else if (key == "meta") {
      std::string k, v;
      ls >> k;
      std::getline(ls >> std::ws, v);
      meta[k] = v;
    } else if (key == "param" || key == "buffer") {
      Entry e;
      e.kind = key;
      std::string dtype;
      ls >> e.name >> e.shape.n >> e.shape.c >> e.shape.h >> e.shape.w >> dtype;
      if (dtype != "float32") throw ConfigError("checkpoint: unsupported dtype " + dtype);
      entries.push_back(e);
    } else {
      throw ConfigError("checkpoint: unknown manifest key '" + key + "' in " + path);
    }
  }
  HelmNet<float> net(cfg);
  if (hex(net.architecture_hash()) != hash) {
    throw ConfigError("checkpoint: architecture hash " + hash + " in " + path + " does not match this build");
  }
  auto& params = net.parameters();
  auto& buffers = net.buffers();
  if (entries.size() != params.size() + buffers.size()) {
    throw ConfigError("checkpoint: tensor count mismatch in " + path);
  }
  std::ifstream blob(path + ".bin", std::ios::binary);
  if (!blob) throw ConfigError("checkpoint: cannot open " + path + ".bin");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<float>& t = i < params.size() ? params[i].value : buffers[i - params.size()].value;
    const std::string& name = i < params.size() ? params[i].name : buffers[i - params.size()].name;
    if (entries[i].name != name || !(entries[i].shape == t.shape())) {
      throw ConfigError("checkpoint: tensor " + entries[i].name + " does not match " + name);
    }
    blob.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * 4));
    if (!blob) throw ConfigError("checkpoint: blob " + path + ".bin is truncated");
  }
  for (auto& p : params) p.zero_grad();
  return {std::move(net), std::move(meta)};
}

}  // namespace helmnet::nn
