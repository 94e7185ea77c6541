#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/corpus.hpp"
#include "modpipe/model.hpp"
#include "modpipe/taxonomy.hpp"

namespace modpipe {

// Non-interpolated average precision. Items are ranked by descending score
// with ties kept in input order (stable sort), and
//   AP = sum over positive ranks k of precision@k / #positives.
// Throws UndefinedMetricError when there is no positive label.
double average_precision(std::span<const double> scores, std::span<const bool> labels);
double average_precision(std::span<const double> scores, const std::vector<bool>& labels);

struct EvalRow {
  std::optional<double> auprc;  // nullopt when the category has no positive
  std::size_t positives = 0;
  std::size_t total = 0;        // samples labeled for the category
};

struct EvalTable {
  std::string dataset;
  std::string checkpoint;
  std::array<EvalRow, kNumCategories> rows{};

  const EvalRow& row(Category c) const { return rows[index_of(c)]; }
  // Mean AUPRC over defined categories; nullopt if none is defined.
  std::optional<double> mean_auprc() const;
};

nlohmann::json to_json(const EvalTable& t);
EvalTable eval_table_from_json(const nlohmann::json& j);
// Aligned plain-text rendering; undefined cells print as "n/a".
std::string to_text(const EvalTable& t);

// Per-category AP over samples labeled for that category.
EvalTable evaluate(const Model& model, const Dataset& d);
// Same, with precomputed scores aligned with `d`.
EvalTable evaluate_scores(std::span<const CategoryScores> scores, const Dataset& d,
                          std::string checkpoint = {});

enum class ExternalFormat { jsonl, csv };

struct LabelFieldSpec {
  std::string text_field = "text";
  std::string id_field;  // empty: ids are generated from the row number
  // Unset: mapped fields must be binary (0/1/true/false). Set: a field's
  // max value above the threshold counts as positive.
  std::optional<double> threshold;
  std::optional<ExternalFormat> format;  // unset: from the file extension
};

struct AdaptResult {
  Dataset dataset;
  std::size_t skipped = 0;
  std::vector<std::string> errors;  // one per skipped row
};

// Converts an external labeled file into a corpus Dataset. Rows lacking a
// mapped field are skipped and counted; a missing text column is a schema
// error (MappingError naming the field).
AdaptResult adapt_external(const std::filesystem::path& path, const TaxonomyMapping& mapping,
                           const LabelFieldSpec& spec);

}  // namespace modpipe
