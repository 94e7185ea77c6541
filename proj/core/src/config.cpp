#include "modpipe/config.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

json thresholds_json(const std::array<double, kNumCategories>& t) {
  json j = json::object();
  for (auto c : kAllCategories) j[std::string(to_string(c))] = t[index_of(c)];
  return j;
}

// Accepts a single number or a per-category object.
void read_thresholds(const json& j, std::array<double, kNumCategories>& t) {
  if (j.is_number()) {
    t.fill(j.get<double>());
    return;
  }
  for (const auto& [k, v] : j.items()) t[index_of(parse_category(k))] = v.get<double>();
}

json section(const json& j, const char* name) {
  if (!j.contains(name)) return json::object();
  if (!j[name].is_object()) throw InputError(std::string("config section ") + name + " must be an object");
  return j[name];
}

}  // namespace

void ServiceConfig::validate() const {
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw InputError("service thresholds must lie in (0, 1)");
  }
  if (port < 0 || port > 65535) throw InputError("port out of range");
  if (lease_seconds <= 0) throw InputError("lease seconds must be positive");
  if (max_body_bytes == 0) throw InputError("max body bytes must be positive");
}

ModelSpec AppConfig::model_spec() const {
  ModelSpec spec{featurizer, network};
  spec.network.input_dim = featurizer.dimensionality;
  return spec;
}

json to_json(const AppConfig& c) {
  json service = {{"host", c.service.host},
                  {"port", c.service.port},
                  {"checkpoint", c.service.checkpoint},
                  {"thresholds", thresholds_json(c.service.thresholds)},
                  {"queue_path", c.service.queue_path},
                  {"corpus_path", c.service.corpus_path},
                  {"redteam_path", c.service.redteam_path},
                  {"lease_seconds", c.service.lease_seconds},
                  {"max_body_bytes", c.service.max_body_bytes}};
  if (c.service.auth_token) service["auth_token"] = *c.service.auth_token;
  json crossval = {{"threshold", c.crossval.threshold}};
  if (c.crossval.per_category_threshold) {
    crossval["per_category_threshold"] = thresholds_json(*c.crossval.per_category_threshold);
  }
  return {{"featurizer", to_json(c.featurizer)},
          {"network", to_json(c.network)},
          {"train", to_json(c.train)},
          {"mix", to_json(c.mix)},
          {"loop", to_json(c.loop)},
          {"audit",
           {{"per_source", c.audit.per_source},
            {"score_threshold", c.audit.score_threshold},
            {"retrain_below_f1", c.audit.retrain_below_f1}}},
          {"relabel",
           {{"audit_fraction", c.relabel.audit_fraction},
            {"audit_min", c.relabel.audit_min},
            {"trigger_above", c.relabel.trigger_above}}},
          {"crossval", crossval},
          {"probe", {{"threshold", c.probe_threshold}}},
          {"service", service},
          {"paths",
           {{"data", c.paths.data},
            {"validation", c.paths.validation},
            {"pool", c.paths.pool},
            {"target_pool", c.paths.target_pool},
            {"checkpoint", c.paths.checkpoint},
            {"lexicon", c.paths.lexicon},
            {"redteam", c.paths.redteam},
            {"out_dir", c.paths.out_dir}}}};
}

AppConfig app_config_from_json(const json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  AppConfig c;
  try {
    c.featurizer = featurizer_config_from_json(section(j, "featurizer"));
    c.network = network_config_from_json(section(j, "network"));
    c.network.input_dim = c.featurizer.dimensionality;
    c.train = train_config_from_json(section(j, "train"));
    c.mix = strategy_mix_from_json(section(j, "mix"));
    c.loop = loop_config_from_json(section(j, "loop"));

    const auto audit = section(j, "audit");
    c.audit.per_source = audit.value("per_source", c.audit.per_source);
    c.audit.score_threshold = audit.value("score_threshold", c.audit.score_threshold);
    c.audit.retrain_below_f1 = audit.value("retrain_below_f1", c.audit.retrain_below_f1);

    const auto relabel = section(j, "relabel");
    c.relabel.audit_fraction = relabel.value("audit_fraction", c.relabel.audit_fraction);
    c.relabel.audit_min = relabel.value("audit_min", c.relabel.audit_min);
    c.relabel.trigger_above = relabel.value("trigger_above", c.relabel.trigger_above);

    const auto crossval = section(j, "crossval");
    c.crossval.threshold = crossval.value("threshold", c.crossval.threshold);
    if (crossval.contains("per_category_threshold")) {
      std::array<double, kNumCategories> t;
      t.fill(c.crossval.threshold);
      read_thresholds(crossval["per_category_threshold"], t);
      c.crossval.per_category_threshold = t;
    }

    c.probe_threshold = section(j, "probe").value("threshold", c.probe_threshold);

    const auto s = section(j, "service");
    c.service.host = s.value("host", c.service.host);
    c.service.port = s.value("port", c.service.port);
    c.service.checkpoint = s.value("checkpoint", c.service.checkpoint);
    if (s.contains("thresholds")) read_thresholds(s["thresholds"], c.service.thresholds);
    c.service.queue_path = s.value("queue_path", c.service.queue_path);
    c.service.corpus_path = s.value("corpus_path", c.service.corpus_path);
    c.service.redteam_path = s.value("redteam_path", c.service.redteam_path);
    if (s.contains("auth_token") && !s["auth_token"].is_null()) {
      c.service.auth_token = s["auth_token"].get<std::string>();
    }
    c.service.lease_seconds = s.value("lease_seconds", c.service.lease_seconds);
    c.service.max_body_bytes = s.value("max_body_bytes", c.service.max_body_bytes);
    c.service.validate();

    const auto p = section(j, "paths");
    c.paths.data = p.value("data", "");
    c.paths.validation = p.value("validation", "");
    c.paths.pool = p.value("pool", "");
    c.paths.target_pool = p.value("target_pool", "");
    c.paths.checkpoint = p.value("checkpoint", "");
    c.paths.lexicon = p.value("lexicon", "");
    c.paths.redteam = p.value("redteam", "");
    c.paths.out_dir = p.value("out_dir", "");
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("config file " + path.string() + ": " + e.what());
  }
  return app_config_from_json(j);
}

std::filesystem::path resolve_config_path(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') return env;
  return kDefaultConfigFile;
}

}  // namespace modpipe
