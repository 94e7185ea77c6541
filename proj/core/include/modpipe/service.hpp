#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/config.hpp"
#include "modpipe/corpus.hpp"
#include "modpipe/model.hpp"
#include "modpipe/probe.hpp"

namespace modpipe {

struct ModerationResult {
  CategoryScores scores{};
  std::array<bool, kNumCategories> flagged{};
  std::string checkpoint;

  bool any_flagged() const noexcept;
};

nlohmann::json to_json(const ModerationResult& r);

// Read-only scorer behind POST /v1/moderate.
class ModerationService {
 public:
  ModerationService(std::shared_ptr<const Model> model,
                    const std::array<double, kNumCategories>& thresholds);

  // Masks PII, scores in evaluation mode, flags score > threshold. Throws
  // InputError on empty text.
  ModerationResult moderate(std::string_view text) const;
  const Model& model() const noexcept { return *model_; }
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::shared_ptr<const Model> model_;
  std::array<double, kNumCategories> thresholds_;
  std::string checkpoint_;
};

// Lease-based work queue. An item is issued to one caller at a time; an
// unsubmitted lease expires and the item becomes available again.
class LeaseQueue {
 public:
  using Clock = std::chrono::steady_clock;
  using TimeSource = std::function<Clock::time_point()>;

  struct Lease {
    std::string id;
    Clock::time_point expiry;
  };

  enum class CompleteStatus { ok, unknown, already_completed };

  LeaseQueue(std::vector<std::string> ids, std::chrono::milliseconds lease_duration,
             TimeSource now = [] { return Clock::now(); });

  std::optional<Lease> next();
  CompleteStatus complete(const std::string& id);
  bool contains(const std::string& id) const;
  bool is_completed(const std::string& id) const;

  std::size_t size() const;
  std::size_t completed() const;
  std::size_t available() const;
  std::chrono::milliseconds lease_duration() const noexcept { return lease_; }

 private:
  enum class State : std::uint8_t { pending, leased, completed };
  struct Item {
    std::string id;
    State state = State::pending;
    Clock::time_point expiry{};
  };

  mutable std::mutex mu_;
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
  std::chrono::milliseconds lease_;
  TimeSource now_;
};

// Reads either a SelectionBatch JSON document or a JSONL id queue.
std::vector<std::string> load_queue_ids(const std::filesystem::path& path);

struct QueueItem {
  std::string id;
  std::string text;  // PII-masked
  CategoryScores scores{};
  std::int64_t lease_expires_ms = 0;  // unix epoch milliseconds
};

nlohmann::json to_json(const QueueItem& item);

// Labeling and red-team state behind the /v1 queue endpoints. Corpus writes
// go through CorpusStore (file lock + atomic replace), so labels are visible
// to the next CLI invocation.
class LabelingService {
 public:
  enum class SubmitStatus { ok, unknown_id, already_completed };

  LabelingService(std::shared_ptr<const ModerationService> scorer, CorpusStore corpus,
                  CorpusStore redteam, std::unique_ptr<LeaseQueue> queue);

  // nullopt when nothing is available.
  std::optional<QueueItem> queue_next();
  SubmitStatus submit_label(const std::string& id, const LabelVector& vector,
                            const std::string& annotator_id);
  RedTeamCase submit_redteam(std::string_view text, const LabelVector& expected,
                             std::string_view note);

  const LeaseQueue& queue() const noexcept { return *queue_; }

 private:
  std::shared_ptr<const ModerationService> scorer_;
  std::mutex write_mu_;
  CorpusStore corpus_;
  CorpusStore redteam_;
  std::unique_ptr<LeaseQueue> queue_;
};

std::int64_t unix_seconds();

}  // namespace modpipe
