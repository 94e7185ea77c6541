#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/corpus.hpp"
#include "modpipe/model.hpp"
#include "modpipe/select.hpp"
#include "modpipe/train.hpp"

namespace modpipe {

struct AuditConfig {
  std::size_t per_source = 10;     // annotator-positive and high-score draws
  double score_threshold = 0.5;    // "model probability greater than"
  double retrain_below_f1 = 0.8;   // flag a category for annotator retraining
};

using AuditSelection = std::array<std::vector<std::string>, kNumCategories>;

// Per category: up to `per_source` ids drawn uniformly from samples whose
// latest annotator record is positive, plus up to `per_source` from samples
// scoring above the threshold; deduplicated, in draw order.
AuditSelection audit_select(const Dataset& d, std::span<const CategoryScores> scores,
                            std::uint64_t seed, const AuditConfig& cfg = {});

struct AuditRow {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> f1;  // undefined when tp + fp + fn == 0
  bool flagged = false;
  std::vector<std::string> disagreements;
};

struct AuditReport {
  std::array<AuditRow, kNumCategories> rows{};
};

nlohmann::json to_json(const AuditReport& r);

// Auditor positive is truth, annotator positive is the prediction; anything
// not positive counts as negative. With `selection`, category k only uses
// its own ids; otherwise every id counts for every category. Throws
// InputError listing ids without an auditor vector.
AuditReport audit_f1(const std::map<std::string, LabelVector>& annotator,
                     const std::map<std::string, LabelVector>& auditor,
                     const AuditSelection* selection = nullptr, const AuditConfig& cfg = {});

struct CrossvalConfig {
  double threshold = 0.5;
  std::optional<std::array<double, kNumCategories>> per_category_threshold;
};

struct CrossvalResult {
  std::set<std::string> flagged;
  std::size_t first_half = 0;
  std::size_t second_half = 0;
};

// split_half, train one model per half (each half ordered by id), score the
// opposite half, flag samples where (p >= threshold) disagrees with a labeled
// category.
CrossvalResult crossval_flag(const Dataset& d, const ModelSpec& spec, const TrainConfig& cfg,
                             std::uint64_t seed, const CrossvalConfig& cv = {});

struct RelabelConfig {
  double audit_fraction = 0.10;
  std::size_t audit_min = 10;
  double trigger_above = 0.30;
};

struct RelabelDecision {
  bool triggered = false;
  std::vector<std::string> audited;
  std::vector<std::string> mislabeled;
  double mislabeled_fraction = 0.0;
  std::vector<std::string> queue;
};

nlohmann::json to_json(const RelabelDecision& d);

// Audits a uniform sample of the flagged ids (max(fraction * n, min), capped
// at n) through the auditor oracle. A sample is mislabeled when the auditor
// vector disagrees with its consolidated label on positivity in some
// category. Fires iff the mislabeled fraction is strictly above 0.30; then
// the queue holds every flagged id, else only the confirmed mislabels.
RelabelDecision relabel_trigger(std::span<const std::string> flagged, const Dataset& d,
                                Oracle& auditor, std::uint64_t seed,
                                const RelabelConfig& cfg = {});

// Relabel queue file: one {"id": ...} object per line.
void write_id_queue(std::span<const std::string> ids, const std::filesystem::path& path);
std::vector<std::string> read_id_queue(const std::filesystem::path& path);

}  // namespace modpipe
