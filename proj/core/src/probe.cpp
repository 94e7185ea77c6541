#include "modpipe/probe.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "utf8.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& tokens, std::size_t skip = std::string::npos) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i == skip) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::size_t char_count(std::string_view text) { return detail::code_points(text).size(); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string KeyTokenResult::reduced_text() const { return join(reduced_tokens); }

KeyTokenResult input_reduce(const TextScorer& scorer, std::string_view text, double keep_threshold) {
  const auto views = detail::split_whitespace(text);
  if (views.empty()) throw InputError("input reduction needs non-empty text");
  KeyTokenResult r;
  r.reduced_tokens.assign(views.begin(), views.end());
  r.original_score = scorer(text);
  r.reduced_score = r.original_score;
  r.chars_before = char_count(text);
  if (r.original_score < keep_threshold) {
    r.below_threshold_skip = true;
    r.chars_after = r.chars_before;
    return r;
  }
  auto& tokens = r.reduced_tokens;
  while (tokens.size() > 1) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const double s = scorer(join(tokens, i));
      if (s > best) {
        best = s;
        best_i = i;
      }
    }
    if (!(best >= keep_threshold)) break;
    tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(best_i));
    r.reduced_score = best;
    ++r.iterations;
  }
  r.chars_after = char_count(r.reduced_text());
  return r;
}

KeyTokenResult input_reduce(const Model& model, std::string_view text, Category category,
                            double keep_threshold) {
  const auto k = index_of(category);
  auto r = input_reduce([&](std::string_view t) { return model.score(t)[k]; }, text, keep_threshold);
  r.category = category;
  return r;
}

std::vector<std::string> parse_lexicon(std::string_view content) {
  std::vector<std::string> out;
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(detail::ascii_lower(line.substr(b, e - b + 1)));
  }
  return out;
}

std::vector<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("lexicon not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str());
}

bool lexicon_match(std::string_view text, const std::vector<std::string>& lexicon) {
  const auto lower = detail::ascii_lower(text);
  for (const auto& entry : lexicon) {
    if (!entry.empty() && lower.find(detail::ascii_lower(entry)) != std::string::npos) return true;
  }
  return false;
}

json to_json(const KeyTokenReport& r) {
  json results = json::array();
  for (const auto& x : r.results) {
    results.push_back({{"sample_id", x.sample_id},
                       {"category", to_string(x.category)},
                       {"original_score", x.original_score},
                       {"reduced_text", x.reduced_text()},
                       {"reduced_score", x.reduced_score},
                       {"chars_before", x.chars_before},
                       {"chars_after", x.chars_after}});
  }
  json non_matching = json::array();
  for (auto i : r.non_matching) non_matching.push_back(r.results[i].sample_id);
  return {{"results", results},
          {"mean_chars_before", r.mean_chars_before},
          {"mean_chars_after", r.mean_chars_after},
          {"lexicon_match_fraction",
           r.lexicon_match_fraction ? json(*r.lexicon_match_fraction) : json(nullptr)},
          {"non_matching", non_matching}};
}

KeyTokenReport keytoken_report(const Model& model, const Dataset& d,
                               const std::vector<std::string>& lexicon, double keep_threshold) {
  KeyTokenReport report;
  for (const auto& s : d) {
    const auto scores = model.score(s.text);
    for (auto c : kAllCategories) {
      if (scores[index_of(c)] < keep_threshold) continue;
      auto r = input_reduce(model, s.text, c, keep_threshold);
      r.sample_id = s.id;
      report.results.push_back(std::move(r));
    }
  }
  if (report.results.empty()) return report;
  double before = 0.0, after = 0.0;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    before += static_cast<double>(r.chars_before);
    after += static_cast<double>(r.chars_after);
    if (lexicon_match(r.reduced_text(), lexicon)) {
      ++matched;
    } else {
      report.non_matching.push_back(i);
    }
  }
  const auto n = static_cast<double>(report.results.size());
  report.mean_chars_before = before / n;
  report.mean_chars_after = after / n;
  report.lexicon_match_fraction = static_cast<double>(matched) / n;
  return report;
}

KeyTokenReport keytoken_report(const Model& model, const Dataset& d,
                               const std::filesystem::path& lexicon_path, double keep_threshold) {
  return keytoken_report(model, d, load_lexicon(lexicon_path), keep_threshold);
}

RedTeamCase record_redteam_case(CorpusStore& store, std::string_view text,
                                const CategoryScores& scores, const LabelVector& expected,
                                std::string_view note, std::int64_t timestamp) {
  if (detail::split_whitespace(text).empty()) throw InputError("red-team text is empty");
  const auto existing = store.load();
  RedTeamCase out;
  for (const auto& s : existing) {
    if (s.text == text) {
      out.warning = "duplicate red-team text; already stored as " + s.id;
      break;
    }
  }
  std::size_t salt = existing.size();
  std::string id;
  do {
    id = "rt-" + hex64(fnv1a64(std::string(text) + "\n" + std::to_string(salt++)));
  } while (existing.contains(id));

  json captured = json::object();
  for (auto c : kAllCategories) captured[std::string(to_string(c))] = scores[index_of(c)];
  Sample s;
  s.id = id;
  s.text = std::string(text);
  s.domain = Domain::target;
  s.metadata = {{"origin", "redteam"}, {"scores", captured.dump()}};
  if (!note.empty()) s.metadata["note"] = std::string(note);
  s.labels.push_back({"redteam", Role::auditor, normalize(expected).vector, timestamp});
  store.append_samples({s});
  s.consolidated = consolidate(s);
  out.sample = std::move(s);
  return out;
}

json to_json(const RegressionReport& r) {
  json cases = json::array();
  for (const auto& c : r.cases) {
    json failures = json::array();
    for (auto f : c.failures) failures.push_back(to_string(f));
    cases.push_back({{"id", c.id}, {"passed", c.passed}, {"failures", failures}});
  }
  return {{"cases", cases}, {"passed", r.passed}, {"failed", r.failed}};
}

RegressionReport evaluate_redteam(const Model& model, const Dataset& cases, double threshold) {
  RegressionReport r;
  for (const auto& s : cases) {
    if (!s.consolidated) continue;
    const auto scores = model.score(s.text);
    RegressionCase rc;
    rc.id = s.id;
    for (auto c : kAllCategories) {
      if (!s.consolidated->is_labeled(c)) continue;
      if ((scores[index_of(c)] > threshold) != s.consolidated->is_positive(c)) {
        rc.failures.push_back(c);
      }
    }
    rc.passed = rc.failures.empty();
    (rc.passed ? r.passed : r.failed) += 1;
    r.cases.push_back(std::move(rc));
  }
  return r;
}

}  // namespace modpipe
