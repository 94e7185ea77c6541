#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/taxonomy.hpp"

namespace modpipe {

// source and target are the two sides of domain-adversarial training;
// synthetic marks generated samples.
enum class Domain : std::uint8_t { source, target, synthetic };
enum class Role : std::uint8_t { annotator, auditor, oracle };

std::string_view to_string(Domain d) noexcept;
std::string_view to_string(Role r) noexcept;
Domain parse_domain(std::string_view s);
Role parse_role(std::string_view s);

struct LabelRecord {
  std::string annotator_id;
  Role role = Role::annotator;
  LabelVector vector;
  std::int64_t timestamp = 0;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

struct Sample {
  std::string id;
  std::string text;
  Domain domain = Domain::source;
  std::map<std::string, std::string> metadata;
  std::vector<LabelRecord> labels;
  // Resolution of `labels`; maintained by Dataset.
  std::optional<LabelVector> consolidated;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Auditor records override annotator and oracle records per category; within
// a role the most recent record wins (ties: later position in `labels`).
// Throws ConsolidationError when there are no records.
LabelVector consolidate(const Sample& s);

// Latest record of one role, or nullopt.
std::optional<LabelVector> latest_vector(const Sample& s, Role role);

// Ordered collection with exact id lookup.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::string name) : name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  // Normalizes every record vector and refreshes `consolidated`.
  // Throws DuplicateIdError, InputError on empty id or text.
  void add(Sample s);
  void add_label(std::string_view id, LabelRecord record);

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const Sample* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::optional<std::size_t> index_of(std::string_view id) const;

  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }
  const std::vector<Sample>& samples() const noexcept { return samples_; }

  // Compares samples only; the name is not persisted in JSONL.
  friend bool operator==(const Dataset& a, const Dataset& b) { return a.samples_ == b.samples_; }

 private:
  std::string name_;
  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
};

nlohmann::json to_json(const Sample& s);
// Throws InputError describing the first schema violation.
Sample sample_from_json(const nlohmann::json& j);

// One sample object per line; blank lines are skipped. Throws ParseError
// (with 1-based line number) or DuplicateIdError.
Dataset import_jsonl(const std::filesystem::path& path);
Dataset parse_jsonl(std::string_view content, std::string name = {});
void export_jsonl(const Dataset& d, const std::filesystem::path& path);
std::string to_jsonl(const Dataset& d);

// Replaces e-mail addresses, phone-number-shaped digit runs (7+ digits) and
// URL userinfo with [EMAIL], [PHONE] and [USERINFO]. Nothing else is masked.
std::string mask_pii(std::string_view text);

// Deterministic partition keyed on (seed, id), so the result does not depend
// on sample order. First half gets the extra sample when |d| is odd.
std::pair<Dataset, Dataset> split_half(const Dataset& d, std::uint64_t seed);

struct CategoryCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t unlabeled = 0;
};

struct DatasetStats {
  std::size_t samples = 0;
  std::size_t labeled = 0;
  std::size_t undesired = 0;
  std::array<CategoryCounts, kNumCategories> per_category{};
};

// Counts over consolidated labels; unconsolidated samples count as unlabeled.
DatasetStats stats(const Dataset& d);

// Advisory lock on `<path>.lock` (flock). Exclusive for writers, shared for
// readers; released on destruction.
class FileLock {
 public:
  enum class Mode { shared, exclusive };
  FileLock(const std::filesystem::path& path, Mode mode);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

// A JSONL-backed dataset with locked read-modify-write updates. Each write
// replaces the file atomically (temp file + rename).
class CorpusStore {
 public:
  explicit CorpusStore(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const noexcept { return path_; }
  // Missing file reads as an empty dataset.
  Dataset load() const;
  void append_label(std::string_view id, const LabelRecord& record);
  void append_samples(const std::vector<Sample>& samples);
  void save(const Dataset& d);

 private:
  Dataset load_unlocked() const;
  void save_unlocked(const Dataset& d);
  std::filesystem::path path_;
};

}  // namespace modpipe
