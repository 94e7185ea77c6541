#include "modpipe/corpus.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "seeding.hpp"

namespace modpipe {

std::string_view to_string(Domain d) noexcept {
  switch (d) {
    case Domain::source: return "source";
    case Domain::target: return "target";
    case Domain::synthetic: return "synthetic";
  }
  return "?";
}

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::annotator: return "annotator";
    case Role::auditor: return "auditor";
    case Role::oracle: return "oracle";
  }
  return "?";
}

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  if (s == "synthetic") return Domain::synthetic;
  throw InputError("unknown domain: " + std::string(s));
}

Role parse_role(std::string_view s) {
  if (s == "annotator") return Role::annotator;
  if (s == "auditor") return Role::auditor;
  if (s == "oracle") return Role::oracle;
  throw InputError("unknown role: " + std::string(s));
}

namespace {

int role_tier(Role r) { return r == Role::auditor ? 1 : 0; }

}  // namespace

LabelVector consolidate(const Sample& s) {
  if (s.labels.empty()) throw ConsolidationError("sample " + s.id + " has no label records");
  LabelVector out;
  for (auto c : kAllCategories) {
    const LabelRecord* best = nullptr;
    for (const auto& r : s.labels) {
      if (!r.vector.is_labeled(c)) continue;
      if (best == nullptr || role_tier(r.role) > role_tier(best->role) ||
          (role_tier(r.role) == role_tier(best->role) && r.timestamp >= best->timestamp)) {
        best = &r;
      }
    }
    if (best != nullptr) out.set(c, best->vector.get(c));
  }
  return normalize(out).vector;
}

std::optional<LabelVector> latest_vector(const Sample& s, Role role) {
  const LabelRecord* best = nullptr;
  for (const auto& r : s.labels) {
    if (r.role != role) continue;
    if (best == nullptr || r.timestamp >= best->timestamp) best = &r;
  }
  if (best == nullptr) return std::nullopt;
  return best->vector;
}

void Dataset::add(Sample s) {
  if (s.id.empty()) throw InputError("sample id must be non-empty");
  if (s.text.empty()) throw InputError("sample " + s.id + " has empty text");
  if (index_.count(s.id) != 0) throw DuplicateIdError(s.id);
  for (auto& r : s.labels) r.vector = normalize(r.vector).vector;
  if (s.labels.empty()) {
    s.consolidated.reset();
  } else {
    s.consolidated = consolidate(s);
  }
  index_.emplace(s.id, samples_.size());
  samples_.push_back(std::move(s));
}

void Dataset::add_label(std::string_view id, LabelRecord record) {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw NotFoundError("unknown sample id: " + std::string(id));
  auto& s = samples_[it->second];
  record.vector = normalize(record.vector).vector;
  s.labels.push_back(std::move(record));
  s.consolidated = consolidate(s);
}

const Sample* Dataset::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &samples_[it->second];
}

std::optional<std::size_t> Dataset::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json to_json(const Sample& s) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& r : s.labels) {
    labels.push_back({{"annotator_id", r.annotator_id},
                      {"role", std::string(to_string(r.role))},
                      {"vector", to_json(r.vector)},
                      {"timestamp", r.timestamp}});
  }
  return {{"id", s.id},
          {"text", s.text},
          {"domain", std::string(to_string(s.domain))},
          {"metadata", s.metadata},
          {"labels", labels}};
}

Sample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("sample must be a JSON object");
  if (!j.contains("id") || !j["id"].is_string()) throw InputError("missing string field \"id\"");
  if (!j.contains("text") || !j["text"].is_string()) {
    throw InputError("missing string field \"text\"");
  }
  Sample s;
  s.id = j["id"].get<std::string>();
  s.text = j["text"].get<std::string>();
  if (j.contains("domain")) s.domain = parse_domain(j["domain"].get<std::string>());
  if (j.contains("metadata")) {
    if (!j["metadata"].is_object()) throw InputError("\"metadata\" must be an object");
    for (const auto& [k, v] : j["metadata"].items()) {
      if (!v.is_string()) throw InputError("metadata value for " + k + " must be a string");
      s.metadata[k] = v.get<std::string>();
    }
  }
  if (j.contains("labels")) {
    if (!j["labels"].is_array()) throw InputError("\"labels\" must be an array");
    for (const auto& r : j["labels"]) {
      LabelRecord rec;
      rec.annotator_id = r.value("annotator_id", std::string{});
      rec.role = parse_role(r.value("role", std::string("annotator")));
      rec.vector = label_vector_from_json(r.value("vector", nlohmann::json::object()));
      rec.timestamp = r.value("timestamp", std::int64_t{0});
      s.labels.push_back(std::move(rec));
    }
  }
  return s;
}

Dataset parse_jsonl(std::string_view content, std::string name) {
  Dataset d(std::move(name));
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const auto nl = content.find('\n', pos);
    const auto end = nl == std::string_view::npos ? content.size() : nl;
    auto line = content.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (nl == std::string_view::npos) break;
      continue;
    }
    try {
      d.add(sample_from_json(nlohmann::json::parse(line)));
    } catch (const DuplicateIdError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
    if (nl == std::string_view::npos) break;
  }
  return d;
}

Dataset import_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open dataset: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_jsonl(ss.str(), path.stem().string());
}

std::string to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& s : d) {
    out += to_json(s).dump();
    out.push_back('\n');
  }
  return out;
}

void export_jsonl(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write dataset: " + path.string());
  out << to_jsonl(d);
  if (!out) throw StorageError("write failed: " + path.string());
}

std::string mask_pii(std::string_view text) {
  static const std::regex kUserinfo(R"(([A-Za-z][A-Za-z0-9+.\-]*://)[^/\s@\[\]]+@)");
  static const std::regex kEmail(R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,})");
  static const std::regex kPhone(R"(\+?\d[\d \-.()]{5,}\d)");

  std::string s = std::regex_replace(std::string(text), kUserinfo, "$1[USERINFO]@");
  s = std::regex_replace(s, kEmail, "[EMAIL]");

  std::string out;
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kPhone); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    const auto digits = std::count_if(m[0].first, m[0].second,
                                      [](char c) { return c >= '0' && c <= '9'; });
    if (digits < 7) continue;
    const auto start = static_cast<std::size_t>(m.position(0));
    out.append(s, last, start - last);
    out += "[PHONE]";
    last = start + static_cast<std::size_t>(m.length(0));
  }
  out.append(s, last, std::string::npos);
  return out;
}

std::pair<Dataset, Dataset> split_half(const Dataset& d, std::uint64_t seed) {
  if (d.size() < 2) throw InputError("split_half needs at least 2 samples");
  const auto salt = detail::derive_seed(seed, "split_half");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::string key = d[i].id;
    for (int b = 0; b < 8; ++b) key.push_back(static_cast<char>((salt >> (8 * b)) & 0xFF));
    keyed.emplace_back(fnv1a64(key), i);
  }
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return d[a.second].id < d[b.second].id;
  });
  const std::size_t first_size = (d.size() + 1) / 2;
  std::vector<bool> in_first(d.size(), false);
  for (std::size_t k = 0; k < first_size; ++k) in_first[keyed[k].second] = true;

  Dataset a(d.name() + ".half1");
  Dataset b(d.name() + ".half2");
  for (std::size_t i = 0; i < d.size(); ++i) (in_first[i] ? a : b).add(d[i]);
  return {std::move(a), std::move(b)};
}

DatasetStats stats(const Dataset& d) {
  DatasetStats st;
  st.samples = d.size();
  for (const auto& s : d) {
    if (!s.consolidated) {
      for (auto& c : st.per_category) ++c.unlabeled;
      continue;
    }
    ++st.labeled;
    if (is_undesired(*s.consolidated)) ++st.undesired;
    for (auto c : kAllCategories) {
      auto& cc = st.per_category[index_of(c)];
      switch (s.consolidated->get(c)) {
        case Label::positive: ++cc.positive; break;
        case Label::negative: ++cc.negative; break;
        case Label::unlabeled: ++cc.unlabeled; break;
      }
    }
  }
  return st;
}

FileLock::FileLock(const std::filesystem::path& path, Mode mode) {
  const auto lock_path = path.string() + ".lock";
  fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw StorageError("cannot open lock file " + lock_path + ": " + std::strerror(errno));
  }
  const int op = mode == Mode::exclusive ? LOCK_EX : LOCK_SH;
  while (::flock(fd_, op) != 0) {
    if (errno == EINTR) continue;
    const int err = errno;
    ::close(fd_);
    throw StorageError("cannot lock " + lock_path + ": " + std::strerror(err));
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

Dataset CorpusStore::load_unlocked() const {
  if (!std::filesystem::exists(path_)) return Dataset(path_.stem().string());
  return import_jsonl(path_);
}

void CorpusStore::save_unlocked(const Dataset& d) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  auto tmp = path_;
  tmp += ".tmp";
  export_jsonl(d, tmp);
  std::error_code ec;
  std::filesystem::rename(tmp, path_, ec);
  if (ec) throw StorageError("cannot replace " + path_.string() + ": " + ec.message());
}

Dataset CorpusStore::load() const {
  FileLock lock(path_, FileLock::Mode::shared);
  return load_unlocked();
}

void CorpusStore::append_label(std::string_view id, const LabelRecord& record) {
  FileLock lock(path_, FileLock::Mode::exclusive);
  auto d = load_unlocked();
  d.add_label(id, record);
  save_unlocked(d);
}

void CorpusStore::append_samples(const std::vector<Sample>& samples) {
  FileLock lock(path_, FileLock::Mode::exclusive);
  auto d = load_unlocked();
  for (const auto& s : samples) d.add(s);
  save_unlocked(d);
}

void CorpusStore::save(const Dataset& d) {
  FileLock lock(path_, FileLock::Mode::exclusive);
  save_unlocked(d);
}

}  // namespace modpipe
