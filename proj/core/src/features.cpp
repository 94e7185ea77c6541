#include "modpipe/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "utf8.hpp"

namespace modpipe {

void FeaturizerConfig::validate() const {
  if (dimensionality == 0 || (dimensionality & (dimensionality - 1)) != 0) {
    throw InputError("featurizer dimensionality must be a power of two, got " +
                     std::to_string(dimensionality));
  }
  if (word_orders.empty() && char_orders.empty()) {
    throw InputError("featurizer needs at least one n-gram order");
  }
  for (int o : word_orders) {
    if (o < 1) throw InputError("word n-gram orders must be >= 1");
  }
  for (int o : char_orders) {
    if (o < 1) throw InputError("char n-gram orders must be >= 1");
  }
}

nlohmann::json to_json(const FeaturizerConfig& cfg) {
  return {{"word_orders", cfg.word_orders},
          {"char_orders", cfg.char_orders},
          {"dimensionality", cfg.dimensionality},
          {"signed_hash", cfg.signed_hash},
          {"lowercase", cfg.lowercase}};
}

FeaturizerConfig featurizer_config_from_json(const nlohmann::json& j) {
  FeaturizerConfig cfg;
  cfg.word_orders = j.value("word_orders", cfg.word_orders);
  cfg.char_orders = j.value("char_orders", cfg.char_orders);
  cfg.dimensionality = j.value("dimensionality", cfg.dimensionality);
  cfg.signed_hash = j.value("signed_hash", cfg.signed_hash);
  cfg.lowercase = j.value("lowercase", cfg.lowercase);
  cfg.validate();
  return cfg;
}

double SparseVector::norm() const noexcept {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return std::sqrt(sq);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> extract_ngrams(std::string_view text, const FeaturizerConfig& cfg) {
  const std::string lowered = cfg.lowercase ? detail::ascii_lower(text) : std::string(text);
  const auto tokens = detail::split_whitespace(lowered);
  std::vector<std::string> keys;

  for (int order : cfg.word_orders) {
    const auto n = static_cast<std::size_t>(order);
    if (tokens.size() < n) continue;
    const std::string prefix = "w" + std::to_string(order) + ":";
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string key = prefix;
      for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) key.push_back(' ');
        key.append(tokens[i + k]);
      }
      keys.push_back(std::move(key));
    }
  }

  if (!cfg.char_orders.empty() && !tokens.empty()) {
    std::string joined;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0) joined.push_back(' ');
      joined.append(tokens[i]);
    }
    const auto cps = detail::code_points(joined);
    for (int order : cfg.char_orders) {
      const auto n = static_cast<std::size_t>(order);
      if (cps.size() < n) continue;
      const std::string prefix = "c" + std::to_string(order) + ":";
      for (std::size_t i = 0; i + n <= cps.size(); ++i) {
        std::string key = prefix;
        for (std::size_t k = 0; k < n; ++k) key.append(cps[i + k]);
        keys.push_back(std::move(key));
      }
    }
  }
  return keys;
}

HashedFeature hash_feature(std::string_view key, const FeaturizerConfig& cfg) noexcept {
  const auto h = fnv1a64(key);
  const auto index = static_cast<std::uint32_t>(h & (cfg.dimensionality - 1));
  const double sign = (cfg.signed_hash && ((h >> 63) & 1U) != 0) ? -1.0 : 1.0;
  return {index, sign};
}

SparseVector featurize(std::string_view text, const FeaturizerConfig& cfg) {
  SparseVector out;
  out.dimensionality = cfg.dimensionality;
  std::map<std::uint32_t, double> acc;
  for (const auto& key : extract_ngrams(text, cfg)) {
    const auto f = hash_feature(key, cfg);
    acc[f.index] += f.sign;
  }
  out.indices.reserve(acc.size());
  out.values.reserve(acc.size());
  for (const auto& [index, value] : acc) {
    if (value == 0.0) continue;
    out.indices.push_back(index);
    out.values.push_back(value);
  }
  const double n = out.norm();
  if (n > 0.0) {
    for (auto& v : out.values) v /= n;
  }
  return out;
}

}  // namespace modpipe
