#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/corpus.hpp"

namespace modpipe {

// Label rule of a template: a fixed vector, or a vector chosen by the value
// of one slot (with an optional default for unlisted fillers).
struct LabelRule {
  LabelVector fixed;
  std::string by_slot;  // empty: fixed rule
  std::map<std::string, LabelVector> cases;
  std::optional<LabelVector> fallback;
};

// Body with {slot} placeholders and one filler list per slot.
struct Template {
  std::string id;
  std::string body;
  std::map<std::string, std::vector<std::string>> slots;
  LabelRule rule;

  // Throws InputError: unknown or unfillable slot, or a rule that is not
  // total over the fillers.
  void validate() const;
  std::vector<std::string> placeholders() const;
  // Product of filler-list sizes over the placeholders in the body.
  std::uint64_t combinations() const;
  LabelVector label_for(const std::map<std::string, std::string>& assignment) const;
};

// JSON: {"id", "body", "slots": {name: [...]}, "label_rule": {"fixed": {...}}
// or {"by_slot": name, "cases": {filler: {...}}, "default": {...}}}.
Template template_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Template& t);
std::vector<Template> load_templates(const std::filesystem::path& path);

// Turns a filled prompt into sample text. The default is the identity, so
// the filled template itself becomes the sample.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(std::string_view filled_prompt) = 0;
};

class IdentityGenerator : public TextGenerator {
 public:
  std::string generate(std::string_view filled_prompt) override {
    return std::string(filled_prompt);
  }
};

struct ExpandOptions {
  bool with_replacement = false;
  TextGenerator* generator = nullptr;  // null: identity
  std::int64_t timestamp = 0;
};

// Seeded uniform draws over slot combinations. Samples carry domain
// synthetic, metadata {origin, template, slot.<name>} and an oracle record
// from the rule. Throws InputError if count exceeds the number of distinct
// combinations without replacement.
std::vector<Sample> expand_template(const Template& t, std::size_t count, std::uint64_t seed,
                                    const ExpandOptions& opts = {});

// Slot assignment recorded in a synthetic sample's metadata.
std::map<std::string, std::string> slot_assignment(const Sample& s);

// Cartesian product "<subject> <predicate>": identity subjects are labeled H
// positive (other categories negative), object subjects all-negative. Marked
// metadata curated=true. Throws InputError on an empty list.
std::vector<Sample> build_counterfactual(const std::vector<std::string>& identities,
                                         const std::vector<std::string>& objects,
                                         const std::vector<std::string>& predicates);

// Noisy synthetic = domain synthetic, not curated, and no annotator or
// auditor record. Unless allow_noisy, such samples are dropped.
bool is_noisy_synthetic(const Sample& s);
Dataset filter_noisy_synthetic(const Dataset& d, bool allow_noisy);

}  // namespace modpipe
