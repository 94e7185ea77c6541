#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/features.hpp"
#include "modpipe/net.hpp"
#include "modpipe/quality.hpp"
#include "modpipe/select.hpp"
#include "modpipe/train.hpp"

namespace modpipe {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string checkpoint;
  std::array<double, kNumCategories> thresholds = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  std::string queue_path;
  std::string corpus_path;
  std::string redteam_path;
  std::optional<std::string> auth_token;
  std::int64_t lease_seconds = 600;
  std::size_t max_body_bytes = 32 * 1024;

  // Thresholds must lie in (0, 1).
  void validate() const;
};

struct PathsConfig {
  std::string data;
  std::string validation;
  std::string pool;
  std::string target_pool;
  std::string checkpoint;
  std::string lexicon;
  std::string redteam;
  std::string out_dir;
};

// Single JSON file with one flat section per module; missing sections and
// keys keep their defaults.
struct AppConfig {
  FeaturizerConfig featurizer;
  NetworkConfig network;
  TrainConfig train;
  StrategyMix mix;
  LoopConfig loop;
  AuditConfig audit;
  RelabelConfig relabel;
  CrossvalConfig crossval;
  double probe_threshold = 0.8;
  ServiceConfig service;
  PathsConfig paths;

  ModelSpec model_spec() const;
};

nlohmann::json to_json(const AppConfig& c);
AppConfig app_config_from_json(const nlohmann::json& j);
// Throws NotFoundError naming the path if it does not exist.
AppConfig load_app_config(const std::filesystem::path& path);

inline constexpr const char* kConfigEnvVar = "MODPIPE_CONFIG";
inline constexpr const char* kDefaultConfigFile = "modpipe.json";

// Explicit flag, then $MODPIPE_CONFIG, then ./modpipe.json.
std::filesystem::path resolve_config_path(const std::optional<std::string>& flag);

}  // namespace modpipe
