#include "modpipe/model.hpp"

#include "modpipe/corpus.hpp"
#include "modpipe/error.hpp"

namespace modpipe {
namespace {

NetworkConfig with_input_dim(NetworkConfig cfg, const FeaturizerConfig& f) {
  cfg.input_dim = f.dimensionality;
  return cfg;
}

}  // namespace

Model::Model(ModelSpec spec)
    : featurizer_(std::move(spec.featurizer)),
      network_(with_input_dim(std::move(spec.network), featurizer_)) {
  featurizer_.validate();
}

Model::Model(FeaturizerConfig featurizer, Network network)
    : featurizer_(std::move(featurizer)), network_(std::move(network)) {
  featurizer_.validate();
  if (network_.config().input_dim != featurizer_.dimensionality) {
    throw DimensionError("network input " + std::to_string(network_.config().input_dim) +
                         " does not match featurizer dimensionality " +
                         std::to_string(featurizer_.dimensionality));
  }
}

SparseVector Model::features(std::string_view text) const { return featurize(text, featurizer_); }

CategoryScores Model::score(std::string_view text) const { return score(features(text)); }

CategoryScores Model::score(const SparseVector& x) const {
  const auto h = network_.encode(x);
  return network_.heads_forward(h);
}

std::vector<CategoryScores> score_all(const Model& model, const Dataset& d) {
  std::vector<CategoryScores> out;
  out.reserve(d.size());
  for (const auto& s : d) out.push_back(model.score(s.text));
  return out;
}

}  // namespace modpipe
