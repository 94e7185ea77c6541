#include "modpipe/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"

namespace modpipe {

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::S: return "S";
    case Category::H: return "H";
    case Category::V: return "V";
    case Category::HR: return "HR";
    case Category::SH: return "SH";
    case Category::S3: return "S3";
    case Category::H2: return "H2";
    case Category::V2: return "V2";
  }
  return "?";
}

std::optional<Category> try_parse_category(std::string_view name) noexcept {
  for (auto c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

Category parse_category(std::string_view name) {
  if (auto c = try_parse_category(name)) return *c;
  throw InputError("unknown category identifier: " + std::string(name));
}

std::optional<Category> parent(Category c) noexcept {
  switch (c) {
    case Category::S3: return Category::S;
    case Category::H2: return Category::H;
    case Category::V2: return Category::V;
    default: return std::nullopt;
  }
}

std::string_view to_string(Label l) noexcept {
  switch (l) {
    case Label::unlabeled: return "unlabeled";
    case Label::positive: return "positive";
    case Label::negative: return "negative";
  }
  return "?";
}

Label parse_label(std::string_view name) {
  if (name == "positive") return Label::positive;
  if (name == "negative") return Label::negative;
  if (name == "unlabeled") return Label::unlabeled;
  throw InputError("unknown label value: " + std::string(name));
}

std::size_t LabelVector::labeled_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](Label l) { return l != Label::unlabeled; }));
}

std::size_t LabelVector::positive_count() const noexcept {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), Label::positive));
}

NormalizeResult normalize(const LabelVector& raw) {
  NormalizeResult out{raw, {}};
  auto& v = out.vector;
  for (auto sub : kAllCategories) {
    const auto par = parent(sub);
    if (!par) continue;
    if (v.is_positive(sub)) {
      if (v.get(*par) == Label::negative) {
        out.notes.push_back(std::string(to_string(sub)) + " positive conflicts with " +
                            std::string(to_string(*par)) + " negative; promoted " +
                            std::string(to_string(*par)) + " to positive");
      }
      v.set(*par, Label::positive);
    } else if (v.get(*par) == Label::negative && v.get(sub) == Label::unlabeled) {
      v.set(sub, Label::negative);
    }
  }
  return out;
}

NormalizeResult normalize(const std::map<std::string, Label>& raw) {
  LabelVector v;
  for (const auto& [name, label] : raw) v.set(parse_category(name), label);
  return normalize(v);
}

bool is_undesired(const LabelVector& v) noexcept { return v.positive_count() > 0; }

nlohmann::json to_json(const LabelVector& v) {
  auto j = nlohmann::json::object();
  for (auto c : kAllCategories) {
    if (v.is_labeled(c)) j[std::string(to_string(c))] = std::string(to_string(v.get(c)));
  }
  return j;
}

LabelVector label_vector_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("label vector must be a JSON object");
  LabelVector v;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw InputError("label for " + key + " must be a string");
    v.set(parse_category(key), parse_label(value.get<std::string>()));
  }
  return v;
}

TaxonomyMapping::TaxonomyMapping(std::vector<MappingRule> rules) : rules_(std::move(rules)) {
  std::set<Category> seen;
  for (const auto& r : rules_) {
    if (r.max_of.empty()) {
      throw MappingError("", "mapping rule for " + std::string(to_string(r.category)) +
                                 " has an empty field set");
    }
    if (!seen.insert(r.category).second) {
      throw MappingError("", "category " + std::string(to_string(r.category)) +
                                 " is mapped more than once");
    }
    for (const auto& f : r.max_of) {
      if (f.empty()) throw MappingError(f, "empty external field name");
    }
  }
}

TaxonomyMapping TaxonomyMapping::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw MappingError("", "taxonomy mapping must be a JSON array");
  std::vector<MappingRule> rules;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("category") || !item.contains("max_of")) {
      throw MappingError("", "mapping entries need \"category\" and \"max_of\"");
    }
    MappingRule r{parse_category(item.at("category").get<std::string>()), {}};
    for (const auto& f : item.at("max_of")) r.max_of.push_back(f.get<std::string>());
    rules.push_back(std::move(r));
  }
  return TaxonomyMapping(std::move(rules));
}

TaxonomyMapping TaxonomyMapping::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open taxonomy mapping: " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw MappingError("", "malformed taxonomy mapping " + path + ": " + e.what());
  }
}

nlohmann::json TaxonomyMapping::to_json() const {
  auto j = nlohmann::json::array();
  for (const auto& r : rules_) {
    j.push_back({{"category", std::string(to_string(r.category))}, {"max_of", r.max_of}});
  }
  return j;
}

std::vector<std::string> TaxonomyMapping::fields() const {
  std::set<std::string> all;
  for (const auto& r : rules_) all.insert(r.max_of.begin(), r.max_of.end());
  return {all.begin(), all.end()};
}

TaxonomyMapping TaxonomyMapping::perspective() {
  return TaxonomyMapping({
      {Category::S, {"sexually_explicit", "profanity", "flirtation"}},
      {Category::H, {"identity_attack"}},
      {Category::V, {"threat"}},
      {Category::HR, {"toxicity", "severe_toxicity", "insult", "threat"}},
  });
}

TaxonomyMapping TaxonomyMapping::jigsaw() {
  return TaxonomyMapping({
      {Category::HR, {"toxic"}},
      {Category::S, {"obscene"}},
      {Category::V, {"threat"}},
      {Category::H, {"identity_hate"}},
  });
}

std::map<Category, double> map_external(const std::map<std::string, double>& scores,
                                        const TaxonomyMapping& mapping) {
  std::map<Category, double> out;
  for (const auto& rule : mapping.rules()) {
    double best = 0.0;
    bool first = true;
    for (const auto& field : rule.max_of) {
      auto it = scores.find(field);
      if (it == scores.end()) throw MappingError(field, "missing external field: " + field);
      if (first || it->second > best) best = it->second;
      first = false;
    }
    out[rule.category] = best;
  }
  return out;
}

}  // namespace modpipe
