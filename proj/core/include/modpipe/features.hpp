#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace modpipe {

// Hashed n-gram featurization.
//
// Text is (optionally ASCII-lowercased) split on Unicode whitespace. Word
// n-grams join tokens with a single space; character n-grams run over code
// points of the tokens re-joined with single spaces, without padding.
//
// Every n-gram is keyed as `<kind><order>:<bytes>` with kind 'w' or 'c'
// (e.g. "w2:hello world", "c3:abc") and hashed with 64-bit FNV-1a. The
// feature index is `hash & (dimensionality - 1)`; with signed hashing the
// contribution is -1 when bit 63 of the hash is set and +1 otherwise.
// Colliding contributions are summed and the vector is L2-normalized.
struct FeaturizerConfig {
  std::vector<int> word_orders{1, 2};
  std::vector<int> char_orders{3, 4, 5};
  std::uint32_t dimensionality = 1u << 18;
  bool signed_hash = true;
  bool lowercase = true;

  // Throws InputError: dimensionality must be a power of two, orders >= 1,
  // and at least one order configured.
  void validate() const;

  friend bool operator==(const FeaturizerConfig&, const FeaturizerConfig&) = default;
};

nlohmann::json to_json(const FeaturizerConfig& cfg);
FeaturizerConfig featurizer_config_from_json(const nlohmann::json& j);

// Sorted (index, value) pairs; indices strictly increasing.
struct SparseVector {
  std::uint32_t dimensionality = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
  double norm() const noexcept;

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// The n-gram keys of `text`, in generation order (word orders first).
std::vector<std::string> extract_ngrams(std::string_view text, const FeaturizerConfig& cfg);

struct HashedFeature {
  std::uint32_t index;
  double sign;
};
HashedFeature hash_feature(std::string_view key, const FeaturizerConfig& cfg) noexcept;

// Empty text yields the zero vector.
SparseVector featurize(std::string_view text, const FeaturizerConfig& cfg);

}  // namespace modpipe
