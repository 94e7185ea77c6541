#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace modpipe {

// The fixed label space: five top-level categories and the three most
// severe subcategories. Enumerator order is the canonical output order.
enum class Category : std::uint8_t { S, H, V, HR, SH, S3, H2, V2 };

inline constexpr std::size_t kNumCategories = 8;

inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::S,  Category::H,  Category::V,  Category::HR,
    Category::SH, Category::S3, Category::H2, Category::V2};

constexpr std::size_t index_of(Category c) noexcept { return static_cast<std::size_t>(c); }

std::string_view to_string(Category c) noexcept;

// Throws InputError for anything other than the eight identifiers.
Category parse_category(std::string_view name);
std::optional<Category> try_parse_category(std::string_view name) noexcept;

// S3 -> S, H2 -> H, V2 -> V; nullopt for top-level categories.
std::optional<Category> parent(Category c) noexcept;

enum class Label : std::uint8_t { unlabeled, positive, negative };

std::string_view to_string(Label l) noexcept;
Label parse_label(std::string_view name);

// Per-category ternary assignment. Construction does not normalize; use
// normalize() to obtain a vector satisfying the nesting invariant.
class LabelVector {
 public:
  LabelVector() { values_.fill(Label::unlabeled); }

  static LabelVector all(Label l) {
    LabelVector v;
    v.values_.fill(l);
    return v;
  }

  Label get(Category c) const noexcept { return values_[index_of(c)]; }
  void set(Category c, Label l) noexcept { values_[index_of(c)] = l; }

  bool is_positive(Category c) const noexcept { return get(c) == Label::positive; }
  bool is_labeled(Category c) const noexcept { return get(c) != Label::unlabeled; }

  std::size_t labeled_count() const noexcept;
  std::size_t positive_count() const noexcept;

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::array<Label, kNumCategories> values_;
};

struct NormalizeResult {
  LabelVector vector;
  // One entry per conflict resolved by promoting a parent to positive.
  std::vector<std::string> notes;
};

// Enforces the nesting invariant: a positive subcategory forces its parent
// positive (overriding an explicit negative, which is recorded as a note),
// and a negative parent forces unlabeled subcategories negative.
NormalizeResult normalize(const LabelVector& raw);
NormalizeResult normalize(const std::map<std::string, Label>& raw);

bool is_undesired(const LabelVector& v) noexcept;

// JSON form: {"S": "positive", ...}; unlabeled keys are omitted.
nlohmann::json to_json(const LabelVector& v);
LabelVector label_vector_from_json(const nlohmann::json& j);

// One row of a cross-taxonomy mapping: the category's score is the max of
// the named external fields.
struct MappingRule {
  Category category;
  std::vector<std::string> max_of;
};

class TaxonomyMapping {
 public:
  TaxonomyMapping() = default;
  // Throws MappingError if a rule has an empty field set or a category repeats.
  explicit TaxonomyMapping(std::vector<MappingRule> rules);

  static TaxonomyMapping from_json(const nlohmann::json& j);
  static TaxonomyMapping load(const std::string& path);
  nlohmann::json to_json() const;

  const std::vector<MappingRule>& rules() const noexcept { return rules_; }
  // Every external field referenced by some rule, sorted.
  std::vector<std::string> fields() const;

  // Perspective-style attribute names mapped onto our categories.
  static TaxonomyMapping perspective();
  // Jigsaw toxic-comment label columns mapped onto our categories.
  static TaxonomyMapping jigsaw();

 private:
  std::vector<MappingRule> rules_;
};

// Each mapped category receives the max over its fields; unmapped
// categories are absent. Throws MappingError naming the first missing field.
std::map<Category, double> map_external(const std::map<std::string, double>& scores,
                                        const TaxonomyMapping& mapping);

}  // namespace modpipe
