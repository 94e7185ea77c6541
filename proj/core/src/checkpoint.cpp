#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "base64.hpp"
#include "modpipe/error.hpp"
#include "modpipe/model.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

class Fnv {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update(const std::vector<float>& v) {
    const auto bytes = detail::floats_to_le_bytes(v);
    update(bytes.data(), bytes.size());
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

template <typename F>
void for_each_array(const NetworkParams& p, F&& f) {
  f(p.encoder_weight);
  f(p.encoder_bias);
  for (const auto& h : p.heads) {
    f(h.hidden.weight);
    f(h.hidden.bias);
    f(h.output.weight);
    f(h.output.bias);
  }
  for (const auto& l : p.critic) {
    f(l.weight);
    f(l.bias);
  }
}

std::string content_hash(const json& featurizer, const json& network, const NetworkParams& p) {
  Fnv fnv;
  fnv.update(featurizer.dump());
  fnv.update(std::string_view("\n"));
  fnv.update(network.dump());
  fnv.update(std::string_view("\n"));
  for_each_array(p, [&](const std::vector<float>& v) { fnv.update(v); });
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv.value()));
  return buf;
}

std::string encode_floats(const std::vector<float>& v) {
  return detail::base64_encode(detail::floats_to_le_bytes(v));
}

std::vector<float> decode_floats(const json& j, const char* what) {
  if (!j.is_string()) throw CheckpointError(std::string("missing array ") + what);
  auto bytes = detail::base64_decode(j.get_ref<const std::string&>());
  if (!bytes) throw CheckpointError(std::string("bad base64 in ") + what);
  auto floats = detail::floats_from_le_bytes(*bytes);
  if (!floats) throw CheckpointError(std::string("truncated array ") + what);
  return std::move(*floats);
}

json layer_json(const DenseLayer& l) {
  return {{"in", l.in}, {"out", l.out}, {"weight", encode_floats(l.weight)},
          {"bias", encode_floats(l.bias)}};
}

DenseLayer layer_from_json(const json& j) {
  if (!j.is_object()) throw CheckpointError("malformed layer");
  DenseLayer l;
  l.in = j.at("in").get<std::uint32_t>();
  l.out = j.at("out").get<std::uint32_t>();
  l.weight = decode_floats(j.at("weight"), "layer weight");
  l.bias = decode_floats(j.at("bias"), "layer bias");
  return l;
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  const auto fj = to_json(model.featurizer_config());
  const auto nj = to_json(model.network().config());
  const auto& p = model.network().params();
  json heads = json::array();
  for (const auto& h : p.heads) {
    heads.push_back({{"hidden", layer_json(h.hidden)}, {"output", layer_json(h.output)}});
  }
  json critic = json::array();
  for (const auto& l : p.critic) critic.push_back(layer_json(l));
  json doc = {{"magic", kCheckpointMagic},
              {"version", kCheckpointVersion},
              {"featurizer", fj},
              {"network", nj},
              {"params",
               {{"encoder_weight", encode_floats(p.encoder_weight)},
                {"encoder_bias", encode_floats(p.encoder_bias)},
                {"heads", heads},
                {"critic", critic}}},
              {"hash", content_hash(fj, nj, p)}};
  return doc.dump() + "\n";
}

Model deserialize_checkpoint(std::string_view content) {
  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("not a JSON checkpoint: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("magic") || !doc["magic"].is_string() ||
      doc["magic"].get<std::string>() != kCheckpointMagic) {
    throw CheckpointError("bad magic header");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw CheckpointError("missing version");
  }
  const int version = doc["version"].get<int>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  try {
    const auto& fj = doc.at("featurizer");
    const auto& nj = doc.at("network");
    const auto& pj = doc.at("params");
    NetworkParams p;
    p.encoder_weight = decode_floats(pj.at("encoder_weight"), "encoder_weight");
    p.encoder_bias = decode_floats(pj.at("encoder_bias"), "encoder_bias");
    const auto& heads = pj.at("heads");
    if (!heads.is_array() || heads.size() != kNumCategories) {
      throw CheckpointError("expected 8 heads");
    }
    for (std::size_t k = 0; k < kNumCategories; ++k) {
      p.heads[k].hidden = layer_from_json(heads[k].at("hidden"));
      p.heads[k].output = layer_from_json(heads[k].at("output"));
    }
    for (const auto& l : pj.at("critic")) p.critic.push_back(layer_from_json(l));
    if (!doc.contains("hash") || !doc["hash"].is_string() ||
        doc["hash"].get<std::string>() != content_hash(fj, nj, p)) {
      throw CheckpointError("content hash mismatch");
    }
    auto fcfg = featurizer_config_from_json(fj);
    auto ncfg = network_config_from_json(nj);
    return Model(std::move(fcfg), Network(std::move(ncfg), std::move(p)));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  } catch (const InputError& e) {
    throw CheckpointError(std::string("invalid checkpoint config: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp.string());
    out << serialize_checkpoint(model);
    if (!out) throw StorageError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot rename onto " + path.string() + ": " + ec.message());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("checkpoint not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::string checkpoint_id(const Model& model) {
  return content_hash(to_json(model.featurizer_config()), to_json(model.network().config()),
                      model.network().params());
}

}  // namespace modpipe
