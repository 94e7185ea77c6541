#include "modpipe/synthgen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

bool is_slot_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

// Calls on_text for literal runs and on_slot for each {name} placeholder.
template <typename Text, typename Slot>
void scan_body(std::string_view body, Text&& on_text, Slot&& on_slot) {
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_slot_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}' && j > i + 1) {
        on_slot(body.substr(i + 1, j - i - 1));
        i = j + 1;
        continue;
      }
    }
    on_text(body.substr(i, 1));
    ++i;
  }
}

std::string hex32(std::uint64_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08llx", static_cast<unsigned long long>(v & 0xffffffffULL));
  return buf;
}

std::map<std::string, std::string> decode(const Template& t, const std::vector<std::string>& names,
                                          std::uint64_t index) {
  std::map<std::string, std::string> out;
  for (std::size_t k = names.size(); k-- > 0;) {
    const auto& fillers = t.slots.at(names[k]);
    out[names[k]] = fillers[index % fillers.size()];
    index /= fillers.size();
  }
  return out;
}

std::string fill(const Template& t, const std::map<std::string, std::string>& assignment) {
  std::string out;
  scan_body(
      t.body, [&](std::string_view s) { out += s; },
      [&](std::string_view name) { out += assignment.at(std::string(name)); });
  return out;
}

LabelVector negative_except_h() {
  auto v = LabelVector::all(Label::negative);
  v.set(Category::H, Label::positive);
  return normalize(v).vector;
}

}  // namespace

std::vector<std::string> Template::placeholders() const {
  std::vector<std::string> names;
  scan_body(
      body, [](std::string_view) {},
      [&](std::string_view name) {
        std::string n(name);
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
      });
  return names;
}

void Template::validate() const {
  if (id.empty()) throw InputError("template id is empty");
  if (body.empty()) throw InputError("template " + id + " has an empty body");
  for (const auto& name : placeholders()) {
    auto it = slots.find(name);
    if (it == slots.end() || it->second.empty()) {
      throw InputError("template " + id + ": slot {" + name + "} has no fillers");
    }
  }
  if (!rule.by_slot.empty()) {
    const auto names = placeholders();
    if (std::find(names.begin(), names.end(), rule.by_slot) == names.end()) {
      throw InputError("template " + id + ": label rule refers to unknown slot " + rule.by_slot);
    }
    if (!rule.fallback) {
      for (const auto& f : slots.at(rule.by_slot)) {
        if (rule.cases.count(f) == 0) {
          throw InputError("template " + id + ": no label for filler '" + f + "'");
        }
      }
    }
  }
}

std::uint64_t Template::combinations() const {
  std::uint64_t total = 1;
  for (const auto& name : placeholders()) {
    auto it = slots.find(name);
    const std::uint64_t n = it == slots.end() ? 0 : it->second.size();
    if (n == 0) return 0;
    if (total > std::numeric_limits<std::uint64_t>::max() / n) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= n;
  }
  return total;
}

LabelVector Template::label_for(const std::map<std::string, std::string>& assignment) const {
  if (rule.by_slot.empty()) return normalize(rule.fixed).vector;
  auto a = assignment.find(rule.by_slot);
  if (a == assignment.end()) throw InputError("assignment lacks slot " + rule.by_slot);
  auto it = rule.cases.find(a->second);
  if (it != rule.cases.end()) return normalize(it->second).vector;
  if (rule.fallback) return normalize(*rule.fallback).vector;
  throw InputError("template " + id + ": no label for filler '" + a->second + "'");
}

Template template_from_json(const json& j) {
  Template t;
  try {
    t.id = j.at("id").get<std::string>();
    t.body = j.at("body").get<std::string>();
    for (const auto& [name, fillers] : j.at("slots").items()) {
      t.slots[name] = fillers.get<std::vector<std::string>>();
    }
    const auto& r = j.at("label_rule");
    if (r.contains("fixed")) {
      t.rule.fixed = label_vector_from_json(r["fixed"]);
    } else if (r.contains("by_slot")) {
      t.rule.by_slot = r["by_slot"].get<std::string>();
      for (const auto& [filler, v] : r.at("cases").items()) {
        t.rule.cases[filler] = label_vector_from_json(v);
      }
      if (r.contains("default")) t.rule.fallback = label_vector_from_json(r["default"]);
    } else {
      throw InputError("label_rule needs 'fixed' or 'by_slot'");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed template: ") + e.what());
  }
  t.validate();
  return t;
}

json to_json(const Template& t) {
  json rule;
  if (t.rule.by_slot.empty()) {
    rule = {{"fixed", to_json(t.rule.fixed)}};
  } else {
    json cases = json::object();
    for (const auto& [f, v] : t.rule.cases) cases[f] = to_json(v);
    rule = {{"by_slot", t.rule.by_slot}, {"cases", cases}};
    if (t.rule.fallback) rule["default"] = to_json(*t.rule.fallback);
  }
  return {{"id", t.id}, {"body", t.body}, {"slots", t.slots}, {"label_rule", rule}};
}

std::vector<Template> load_templates(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("template file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("template file " + path.string() + ": " + e.what());
  }
  std::vector<Template> out;
  if (doc.is_array()) {
    for (const auto& t : doc) out.push_back(template_from_json(t));
  } else {
    out.push_back(template_from_json(doc));
  }
  return out;
}

std::vector<Sample> expand_template(const Template& t, std::size_t count, std::uint64_t seed,
                                    const ExpandOptions& opts) {
  t.validate();
  const auto total = t.combinations();
  if (!opts.with_replacement && count > total) {
    throw InputError("template " + t.id + " has " + std::to_string(total) +
                     " combinations; cannot draw " + std::to_string(count) +
                     " without replacement");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> picks;
  picks.reserve(count);
  if (opts.with_replacement) {
    std::uniform_int_distribution<std::uint64_t> any(0, total - 1);
    for (std::size_t i = 0; i < count; ++i) picks.push_back(any(rng));
  } else if (total <= std::max<std::uint64_t>(4 * static_cast<std::uint64_t>(count), 1u << 16)) {
    std::vector<std::uint64_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::uint64_t> pick(i, total - 1);
      std::swap(all[i], all[pick(rng)]);
      picks.push_back(all[i]);
    }
  } else {
    std::set<std::uint64_t> used;
    std::uniform_int_distribution<std::uint64_t> any(0, total - 1);
    while (picks.size() < count) {
      const auto v = any(rng);
      if (used.insert(v).second) picks.push_back(v);
    }
  }

  IdentityGenerator identity;
  TextGenerator& gen = opts.generator != nullptr ? *opts.generator : identity;
  const auto names = t.placeholders();
  const auto prefix = t.id + "-" + hex32(seed);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto assignment = decode(t, names, picks[i]);
    Sample s;
    s.id = prefix + "-" + std::to_string(i);
    s.text = gen.generate(fill(t, assignment));
    s.domain = Domain::synthetic;
    s.metadata["origin"] = "synthetic";
    s.metadata["template"] = t.id;
    for (const auto& [name, value] : assignment) s.metadata["slot." + name] = value;
    s.labels.push_back({"template:" + t.id, Role::oracle, t.label_for(assignment), opts.timestamp});
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, std::string> slot_assignment(const Sample& s) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : s.metadata) {
    if (k.rfind("slot.", 0) == 0) out[k.substr(5)] = v;
  }
  return out;
}

std::vector<Sample> build_counterfactual(const std::vector<std::string>& identities,
                                         const std::vector<std::string>& objects,
                                         const std::vector<std::string>& predicates) {
  if (identities.empty() || objects.empty() || predicates.empty()) {
    throw InputError("counterfactual lists must be non-empty");
  }
  const auto hateful = negative_except_h();
  const auto safe = LabelVector::all(Label::negative);
  std::vector<Sample> out;
  for (std::size_t p = 0; p < predicates.size(); ++p) {
    auto emit = [&](const std::string& subject, bool identity, std::size_t j) {
      Sample s;
      s.id = "cf-" + std::to_string(p) + (identity ? "-i" : "-o") + std::to_string(j);
      s.text = subject + " " + predicates[p];
      s.domain = Domain::synthetic;
      s.metadata = {{"origin", "counterfactual"},
                    {"curated", "true"},
                    {"subject_kind", identity ? "identity" : "object"},
                    {"subject", subject},
                    {"predicate", predicates[p]}};
      s.labels.push_back({"counterfactual", Role::oracle, identity ? hateful : safe, 0});
      out.push_back(std::move(s));
    };
    for (std::size_t j = 0; j < identities.size(); ++j) emit(identities[j], true, j);
    for (std::size_t j = 0; j < objects.size(); ++j) emit(objects[j], false, j);
  }
  return out;
}

bool is_noisy_synthetic(const Sample& s) {
  if (s.domain != Domain::synthetic) return false;
  auto it = s.metadata.find("curated");
  if (it != s.metadata.end() && it->second == "true") return false;
  for (const auto& r : s.labels) {
    if (r.role == Role::annotator || r.role == Role::auditor) return false;
  }
  return true;
}

Dataset filter_noisy_synthetic(const Dataset& d, bool allow_noisy) {
  Dataset out(d.name());
  for (const auto& s : d) {
    if (allow_noisy || !is_noisy_synthetic(s)) out.add(s);
  }
  return out;
}

}  // namespace modpipe
