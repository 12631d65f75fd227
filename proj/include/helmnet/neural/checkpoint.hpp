#pragma once

#include <map>
#include <string>

#include "helmnet/neural/network.hpp"

namespace helmnet::nn {

using Metadata = std::map<std::string, std::string>;

/// Writes `path` (text manifest: config, architecture hash, metadata, one line
/// per tensor) and `path`.bin (little-endian float32 values in manifest
/// order). Both files are written to temporaries and renamed into place.
void save_checkpoint(const HelmNet<float>& net, const std::string& path, const Metadata& meta = {});

struct LoadedCheckpoint {
  HelmNet<float> net;
  Metadata meta;
};

/// Throws ConfigError if the files are missing or the architecture differs.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace helmnet::nn
