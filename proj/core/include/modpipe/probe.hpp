#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/corpus.hpp"
#include "modpipe/model.hpp"

namespace modpipe {

inline constexpr double kDefaultKeepThreshold = 0.8;

struct KeyTokenResult {
  std::string sample_id;
  Category category = Category::S;
  double original_score = 0.0;
  std::vector<std::string> reduced_tokens;
  double reduced_score = 0.0;
  std::size_t chars_before = 0;
  std::size_t chars_after = 0;
  bool below_threshold_skip = false;
  std::size_t iterations = 0;

  std::string reduced_text() const;
};

using TextScorer = std::function<double(std::string_view)>;

// Greedy input reduction over whitespace tokens: while more than one token
// remains, apply the single removal with the highest remaining score if
// that score is >= keep_threshold (ties: earliest position). Inputs that
// start below the threshold are returned unchanged with the skip marker.
// Throws InputError on text without tokens.
KeyTokenResult input_reduce(const TextScorer& scorer, std::string_view text,
                            double keep_threshold = kDefaultKeepThreshold);
KeyTokenResult input_reduce(const Model& model, std::string_view text, Category category,
                            double keep_threshold = kDefaultKeepThreshold);

// Plain text, one token or phrase per line; '#' starts a comment line.
std::vector<std::string> load_lexicon(const std::filesystem::path& path);
std::vector<std::string> parse_lexicon(std::string_view content);

// Case-insensitive substring match against any lexicon entry.
bool lexicon_match(std::string_view text, const std::vector<std::string>& lexicon);

struct KeyTokenReport {
  std::vector<KeyTokenResult> results;
  double mean_chars_before = 0.0;
  double mean_chars_after = 0.0;
  std::optional<double> lexicon_match_fraction;  // nullopt with no results
  std::vector<std::size_t> non_matching;         // indices into results
};

nlohmann::json to_json(const KeyTokenReport& r);

KeyTokenReport keytoken_report(const Model& model, const Dataset& d,
                               const std::vector<std::string>& lexicon,
                               double keep_threshold = kDefaultKeepThreshold);
// Throws NotFoundError if the lexicon file is missing.
KeyTokenReport keytoken_report(const Model& model, const Dataset& d,
                               const std::filesystem::path& lexicon_path,
                               double keep_threshold = kDefaultKeepThreshold);

struct RedTeamCase {
  Sample sample;
  std::optional<std::string> warning;  // duplicate-text notice
};

// Appends a case (domain target, metadata origin=redteam) with the expected
// vector as an auditor record. Duplicate texts get a fresh id and a warning.
RedTeamCase record_redteam_case(CorpusStore& store, std::string_view text,
                                const CategoryScores& scores, const LabelVector& expected,
                                std::string_view note, std::int64_t timestamp = 0);

struct RegressionCase {
  std::string id;
  bool passed = true;
  std::vector<Category> failures;
};

struct RegressionReport {
  std::vector<RegressionCase> cases;
  std::size_t passed = 0;
  std::size_t failed = 0;
};

nlohmann::json to_json(const RegressionReport& r);

// A case passes when, for every labeled category, (score > threshold)
// equals the expected positivity.
RegressionReport evaluate_redteam(const Model& model, const Dataset& cases,
                                  double threshold = 0.5);

}  // namespace modpipe
