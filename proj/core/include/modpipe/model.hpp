#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "modpipe/features.hpp"
#include "modpipe/net.hpp"
#include "modpipe/taxonomy.hpp"

namespace modpipe {

class Dataset;

using CategoryScores = std::array<double, kNumCategories>;

struct ModelSpec {
  FeaturizerConfig featurizer;
  NetworkConfig network;
};

// Featurizer plus network: the unit that scores text. Scoring runs in
// evaluation mode and is safe for concurrent readers.
class Model {
 public:
  // network.input_dim is taken from the featurizer dimensionality.
  explicit Model(ModelSpec spec);
  // Throws DimensionError if the network input does not match the featurizer.
  Model(FeaturizerConfig featurizer, Network network);

  CategoryScores score(std::string_view text) const;
  CategoryScores score(const SparseVector& x) const;
  SparseVector features(std::string_view text) const;

  const FeaturizerConfig& featurizer_config() const noexcept { return featurizer_; }
  const Network& network() const noexcept { return network_; }
  Network& network() noexcept { return network_; }

 private:
  FeaturizerConfig featurizer_;
  Network network_;
};

std::vector<CategoryScores> score_all(const Model& model, const Dataset& d);

// Checkpoint envelope: JSON with the magic string, format version, both
// configs, base64 little-endian float32 parameter arrays and a content hash
// (FNV-1a over configs and parameter bytes).
inline constexpr std::string_view kCheckpointMagic = "MODPIPE-CKPT-1";
inline constexpr int kCheckpointVersion = 1;

std::string serialize_checkpoint(const Model& model);
// Throws CheckpointError (bad magic, hash mismatch, malformed) or VersionError.
Model deserialize_checkpoint(std::string_view content);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Hex content hash; identical for bit-identical models.
std::string checkpoint_id(const Model& model);

}  // namespace modpipe
