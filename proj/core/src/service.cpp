#include "modpipe/service.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "modpipe/quality.hpp"
#include "modpipe/select.hpp"
#include "utf8.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

std::int64_t unix_millis() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::int64_t unix_seconds() { return unix_millis() / 1000; }

bool ModerationResult::any_flagged() const noexcept {
  for (bool f : flagged) {
    if (f) return true;
  }
  return false;
}

json to_json(const ModerationResult& r) {
  json scores = json::object();
  json flagged = json::object();
  for (auto c : kAllCategories) {
    const std::string k(to_string(c));
    scores[k] = r.scores[index_of(c)];
    flagged[k] = r.flagged[index_of(c)];
  }
  return {{"scores", scores}, {"flagged", flagged}, {"any_flagged", r.any_flagged()},
          {"checkpoint", r.checkpoint}};
}

ModerationService::ModerationService(std::shared_ptr<const Model> model,
                                     const std::array<double, kNumCategories>& thresholds)
    : model_(std::move(model)), thresholds_(thresholds) {
  if (!model_) throw InputError("moderation service needs a model");
  for (double t : thresholds_) {
    if (!(t > 0.0 && t < 1.0)) throw InputError("thresholds must lie in (0, 1)");
  }
  checkpoint_ = checkpoint_id(*model_);
}

ModerationResult ModerationService::moderate(std::string_view text) const {
  if (detail::split_whitespace(text).empty()) throw InputError("text is empty");
  ModerationResult r;
  r.scores = model_->score(mask_pii(text));
  for (std::size_t k = 0; k < kNumCategories; ++k) r.flagged[k] = r.scores[k] > thresholds_[k];
  r.checkpoint = checkpoint_;
  return r;
}

LeaseQueue::LeaseQueue(std::vector<std::string> ids, std::chrono::milliseconds lease_duration,
                       TimeSource now)
    : lease_(lease_duration), now_(std::move(now)) {
  if (lease_.count() <= 0) throw InputError("lease duration must be positive");
  for (auto& id : ids) {
    if (index_.count(id) != 0) continue;
    index_.emplace(id, items_.size());
    items_.push_back({std::move(id), State::pending, {}});
  }
}

std::optional<LeaseQueue::Lease> LeaseQueue::next() {
  std::lock_guard lock(mu_);
  const auto now = now_();
  for (auto& item : items_) {
    const bool free = item.state == State::pending ||
                      (item.state == State::leased && item.expiry <= now);
    if (!free) continue;
    item.state = State::leased;
    item.expiry = now + lease_;
    return Lease{item.id, item.expiry};
  }
  return std::nullopt;
}

LeaseQueue::CompleteStatus LeaseQueue::complete(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = index_.find(id);
  if (it == index_.end()) return CompleteStatus::unknown;
  auto& item = items_[it->second];
  if (item.state == State::completed) return CompleteStatus::already_completed;
  item.state = State::completed;
  return CompleteStatus::ok;
}

bool LeaseQueue::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return index_.count(id) != 0;
}

bool LeaseQueue::is_completed(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(id);
  return it != index_.end() && items_[it->second].state == State::completed;
}

std::size_t LeaseQueue::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::size_t LeaseQueue::completed() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& i : items_) n += i.state == State::completed ? 1 : 0;
  return n;
}

std::size_t LeaseQueue::available() const {
  std::lock_guard lock(mu_);
  const auto now = now_();
  std::size_t n = 0;
  for (const auto& i : items_) {
    if (i.state == State::pending || (i.state == State::leased && i.expiry <= now)) ++n;
  }
  return n;
}

std::vector<std::string> load_queue_ids(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("queue file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto content = ss.str();
  // A whole-file JSON object with "entries" is a selection batch.
  try {
    const auto doc = json::parse(content);
    if (doc.is_object() && doc.contains("entries")) return selection_batch_from_json(doc).ids();
  } catch (const json::exception&) {
  }
  return read_id_queue(path);
}

json to_json(const QueueItem& item) {
  json scores = json::object();
  for (auto c : kAllCategories) scores[std::string(to_string(c))] = item.scores[index_of(c)];
  return {{"id", item.id}, {"text", item.text}, {"scores", scores},
          {"lease_expires_ms", item.lease_expires_ms}};
}

LabelingService::LabelingService(std::shared_ptr<const ModerationService> scorer,
                                 CorpusStore corpus, CorpusStore redteam,
                                 std::unique_ptr<LeaseQueue> queue)
    : scorer_(std::move(scorer)),
      corpus_(std::move(corpus)),
      redteam_(std::move(redteam)),
      queue_(std::move(queue)) {
  if (!scorer_ || !queue_) throw InputError("labeling service needs a scorer and a queue");
}

std::optional<QueueItem> LabelingService::queue_next() {
  for (;;) {
    auto lease = queue_->next();
    if (!lease) return std::nullopt;
    const auto d = corpus_.load();
    const auto* s = d.find(lease->id);
    if (s == nullptr) {
      // Ids missing from the corpus cannot be labeled; retire them.
      queue_->complete(lease->id);
      continue;
    }
    QueueItem item;
    item.id = s->id;
    item.text = mask_pii(s->text);
    item.scores = scorer_->model().score(item.text);
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        lease->expiry - LeaseQueue::Clock::now());
    item.lease_expires_ms = unix_millis() + std::max<std::int64_t>(0, remaining.count());
    return item;
  }
}

LabelingService::SubmitStatus LabelingService::submit_label(const std::string& id,
                                                            const LabelVector& vector,
                                                            const std::string& annotator_id) {
  std::lock_guard lock(write_mu_);
  if (!queue_->contains(id)) return SubmitStatus::unknown_id;
  if (queue_->is_completed(id)) return SubmitStatus::already_completed;
  LabelRecord record{annotator_id.empty() ? "console" : annotator_id, Role::annotator,
                     normalize(vector).vector, unix_seconds()};
  try {
    corpus_.append_label(id, record);
  } catch (const NotFoundError&) {
    return SubmitStatus::unknown_id;
  }
  queue_->complete(id);
  return SubmitStatus::ok;
}

RedTeamCase LabelingService::submit_redteam(std::string_view text, const LabelVector& expected,
                                            std::string_view note) {
  std::lock_guard lock(write_mu_);
  const auto result = scorer_->moderate(text);
  return record_redteam_case(redteam_, text, result.scores, expected, note, unix_seconds());
}

}  // namespace modpipe
