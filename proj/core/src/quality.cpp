#include "modpipe/quality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "seeding.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

Dataset sorted_by_id(const Dataset& d) {
  std::vector<const Sample*> ptrs;
  for (const auto& s : d) ptrs.push_back(&s);
  std::sort(ptrs.begin(), ptrs.end(), [](const Sample* a, const Sample* b) { return a->id < b->id; });
  Dataset out(d.name());
  for (const auto* s : ptrs) out.add(*s);
  return out;
}

void flag_half(const Model& model, const Dataset& half, const CrossvalConfig& cv,
               std::set<std::string>& flagged) {
  for (const auto& s : half) {
    if (!s.consolidated) continue;
    const auto p = model.score(s.text);
    for (auto c : kAllCategories) {
      if (!s.consolidated->is_labeled(c)) continue;
      const auto k = index_of(c);
      const double t = cv.per_category_threshold ? (*cv.per_category_threshold)[k] : cv.threshold;
      if ((p[k] >= t) != s.consolidated->is_positive(c)) {
        flagged.insert(s.id);
        break;
      }
    }
  }
}

}  // namespace

AuditSelection audit_select(const Dataset& d, std::span<const CategoryScores> scores,
                            std::uint64_t seed, const AuditConfig& cfg) {
  if (scores.size() != d.size()) throw DimensionError("scores do not cover the dataset");
  AuditSelection out;
  for (auto c : kAllCategories) {
    const auto k = index_of(c);
    std::vector<std::string> annotated, high;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto v = latest_vector(d[i], Role::annotator);
      if (v && v->is_positive(c)) annotated.push_back(d[i].id);
      if (scores[i][k] > cfg.score_threshold) high.push_back(d[i].id);
    }
    const std::string tag(to_string(c));
    auto a = select_random(annotated, std::min(cfg.per_source, annotated.size()),
                           detail::derive_seed(seed, "audit-annotated:" + tag));
    auto h = select_random(high, std::min(cfg.per_source, high.size()),
                           detail::derive_seed(seed, "audit-score:" + tag));
    std::unordered_set<std::string> seen;
    for (auto* list : {&a, &h}) {
      for (auto& id : *list) {
        if (seen.insert(id).second) out[k].push_back(id);
      }
    }
  }
  return out;
}

json to_json(const AuditReport& r) {
  json cats = json::object();
  for (auto c : kAllCategories) {
    const auto& row = r.rows[index_of(c)];
    cats[std::string(to_string(c))] = {{"tp", row.tp},
                                       {"fp", row.fp},
                                       {"fn", row.fn},
                                       {"tn", row.tn},
                                       {"f1", row.f1 ? json(*row.f1) : json(nullptr)},
                                       {"flagged", row.flagged},
                                       {"disagreements", row.disagreements}};
  }
  return {{"categories", cats}};
}

AuditReport audit_f1(const std::map<std::string, LabelVector>& annotator,
                     const std::map<std::string, LabelVector>& auditor,
                     const AuditSelection* selection, const AuditConfig& cfg) {
  std::vector<std::string> all_ids;
  for (const auto& [id, v] : annotator) all_ids.push_back(id);

  std::set<std::string> missing;
  auto check = [&](const std::string& id) {
    if (auditor.count(id) == 0 || annotator.count(id) == 0) missing.insert(id);
  };
  if (selection != nullptr) {
    for (const auto& ids : *selection) {
      for (const auto& id : ids) check(id);
    }
  } else {
    for (const auto& id : all_ids) check(id);
  }
  if (!missing.empty()) {
    std::string msg = "missing audit records for:";
    for (const auto& id : missing) msg += " " + id;
    throw InputError(msg);
  }

  AuditReport r;
  for (auto c : kAllCategories) {
    const auto k = index_of(c);
    auto& row = r.rows[k];
    const auto& ids = selection != nullptr ? (*selection)[k] : all_ids;
    for (const auto& id : ids) {
      const bool truth = auditor.at(id).is_positive(c);
      const bool pred = annotator.at(id).is_positive(c);
      if (truth && pred) ++row.tp;
      if (!truth && pred) ++row.fp;
      if (truth && !pred) ++row.fn;
      if (!truth && !pred) ++row.tn;
      if (truth != pred) row.disagreements.push_back(id);
    }
    const auto denom = 2 * row.tp + row.fp + row.fn;
    if (denom > 0) {
      row.f1 = 2.0 * static_cast<double>(row.tp) / static_cast<double>(denom);
      row.flagged = *row.f1 < cfg.retrain_below_f1;
    }
  }
  return r;
}

CrossvalResult crossval_flag(const Dataset& d, const ModelSpec& spec, const TrainConfig& cfg,
                             std::uint64_t seed, const CrossvalConfig& cv) {
  auto [a, b] = split_half(d, seed);
  const auto first = sorted_by_id(a);
  const auto second = sorted_by_id(b);
  TrainData da;
  da.labeled = &first;
  TrainData db;
  db.labeled = &second;
  const auto model_a = train(da, spec, cfg).model;
  const auto model_b = train(db, spec, cfg).model;
  CrossvalResult r;
  r.first_half = first.size();
  r.second_half = second.size();
  flag_half(model_a, second, cv, r.flagged);
  flag_half(model_b, first, cv, r.flagged);
  return r;
}

json to_json(const RelabelDecision& d) {
  return {{"triggered", d.triggered},
          {"audited", d.audited},
          {"mislabeled", d.mislabeled},
          {"mislabeled_fraction", d.mislabeled_fraction},
          {"queue", d.queue}};
}

RelabelDecision relabel_trigger(std::span<const std::string> flagged, const Dataset& d,
                                Oracle& auditor, std::uint64_t seed, const RelabelConfig& cfg) {
  if (flagged.empty()) throw InputError("no flagged samples to audit");
  const auto n = flagged.size();
  auto k = static_cast<std::size_t>(std::llround(cfg.audit_fraction * static_cast<double>(n)));
  k = std::min(n, std::max(k, cfg.audit_min));

  RelabelDecision out;
  out.audited = select_random(flagged, k, seed);
  const auto labels = auditor.label(out.audited);
  for (const auto& id : out.audited) {
    const auto* s = d.find(id);
    if (s == nullptr) throw NotFoundError("flagged id not in dataset: " + id);
    auto it = labels.find(id);
    if (it == labels.end()) throw OracleError("auditor returned no label for " + id);
    const LabelVector current = s->consolidated.value_or(LabelVector{});
    for (auto c : kAllCategories) {
      if (current.is_positive(c) != it->second.is_positive(c)) {
        out.mislabeled.push_back(id);
        break;
      }
    }
  }
  out.mislabeled_fraction =
      static_cast<double>(out.mislabeled.size()) / static_cast<double>(out.audited.size());
  out.triggered = out.mislabeled_fraction > cfg.trigger_above;
  if (out.triggered) {
    out.queue.assign(flagged.begin(), flagged.end());
  } else {
    out.queue = out.mislabeled;
  }
  return out;
}

void write_id_queue(std::span<const std::string> ids, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path.string());
  for (const auto& id : ids) out << json{{"id", id}}.dump() << "\n";
  if (!out) throw StorageError("write failed: " + path.string());
}

std::vector<std::string> read_id_queue(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("queue file not found: " + path.string());
  std::vector<std::string> ids;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ids.push_back(json::parse(line).at("id").get<std::string>());
    } catch (const json::exception& e) {
      throw ParseError(n, e.what());
    }
  }
  return ids;
}

}  // namespace modpipe
