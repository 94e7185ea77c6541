#include <algorithm>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "modpipe/desk.hpp"
#include "modpipe/error.hpp"
#include "modpipe/features.hpp"
#include "modpipe/probe.hpp"

using namespace modpipe;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> tokens_of(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::string joined(const std::vector<std::string>& t) {
  std::string out;
  for (const auto& x : t) out += (out.empty() ? "" : " ") + x;
  return out;
}

// Reference greedy reduction written from the stated policy.
std::vector<std::string> greedy_reference(const TextScorer& f, std::vector<std::string> t, double keep) {
  if (f(joined(t)) < keep) return t;
  while (t.size() > 1) {
    double best = -1;
    std::size_t at = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto u = t;
      u.erase(u.begin() + static_cast<long>(i));
      const double s = f(joined(u));
      if (s > best) {
        best = s;
        at = i;
      }
    }
    if (best < keep) break;
    t.erase(t.begin() + static_cast<long>(at));
  }
  return t;
}

// Every terminal state reachable by any sequence of threshold-respecting removals.
void all_terminals(const TextScorer& f, const std::vector<std::string>& t, double keep,
                   std::set<std::vector<std::string>>& out) {
  bool moved = false;
  if (t.size() > 1) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto u = t;
      u.erase(u.begin() + static_cast<long>(i));
      if (f(joined(u)) >= keep) {
        moved = true;
        all_terminals(f, u, keep, out);
      }
    }
  }
  if (!moved) out.insert(t);
}

double keyword_scorer(std::string_view text) {
  const auto t = tokens_of(std::string(text));
  return std::ranges::find(t, std::string("badword")) != t.end() ? 0.9 : 0.1;
}

// A deterministic but irregular score of the exact token sequence.
TextScorer hashed_scorer(std::uint64_t salt) {
  return [salt](std::string_view text) {
    const auto h = fnv1a64(std::string(text) + std::to_string(salt));
    return static_cast<double>(h % 1000) / 999.0;
  };
}

Dataset texts(const std::vector<std::string>& items) {
  Dataset d("probe");
  for (std::size_t i = 0; i < items.size(); ++i) {
    Sample s;
    s.id = "q" + std::to_string(i);
    s.text = items[i];
    d.add(s);
  }
  return d;
}

}  // namespace

TEST_CASE("input_reduce: below-threshold input is returned unchanged") {
  const auto r = input_reduce([](std::string_view) { return 0.3; }, "a b c");
  CHECK(r.below_threshold_skip);
  CHECK(r.reduced_text() == "a b c");
  CHECK(r.iterations == 0);
  CHECK(r.chars_after == r.chars_before);
}

TEST_CASE("input_reduce: planted keyword survives every removal order") {
  const auto r = input_reduce(keyword_scorer, "the badword here");
  CHECK(r.reduced_tokens == std::vector<std::string>{"badword"});
  CHECK(r.iterations == 2);
  CHECK(r.reduced_score == 0.9);
  std::set<std::vector<std::string>> terminals;
  all_terminals(keyword_scorer, tokens_of("the badword here"), 0.8, terminals);
  CHECK(terminals == std::set<std::vector<std::string>>{{"badword"}});
}

TEST_CASE("input_reduce with the planted-keyword model") {
  const auto model = desk::planted_keyword_model();
  const auto r = input_reduce(model, "the badword here", Category::H);
  CHECK(r.reduced_text() == "badword");
  CHECK(r.category == Category::H);
  CHECK(r.reduced_score >= 0.8);
  CHECK(r.chars_before == 16);
  CHECK(r.chars_after == 7);
  CHECK(input_reduce(model, "the quiet river", Category::H).below_threshold_skip);
}

TEST_CASE("input_reduce: single token and threshold 1.0") {
  const auto one = input_reduce([](std::string_view) { return 0.9; }, "word");
  CHECK(one.reduced_text() == "word");
  CHECK_FALSE(one.below_threshold_skip);
  const auto strict = input_reduce(keyword_scorer, "the badword here", 1.0);
  CHECK(strict.reduced_text() == "the badword here");
  CHECK_THROWS_AS(input_reduce(keyword_scorer, "  \t "), InputError);
}

TEST_CASE("input_reduce agrees with the reference greedy and keeps its invariants") {
  std::mt19937_64 rng(31);
  std::size_t suboptimal = 0;
  for (int it = 0; it < 300; ++it) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < n; ++i) toks.push_back("w" + std::to_string(rng() % 6));
    const auto f = hashed_scorer(rng());
    const double keep = 0.3 + static_cast<double>(rng() % 50) / 100.0;
    const auto text = joined(toks);
    const auto r = input_reduce(f, text, keep);
    CHECK(r.reduced_tokens == greedy_reference(f, toks, keep));
    CHECK(r.chars_after <= r.chars_before);
    CHECK(r.iterations <= n);
    if (!r.below_threshold_skip) {
      CHECK(r.reduced_score >= keep);
      std::set<std::vector<std::string>> terminals;
      all_terminals(f, toks, keep, terminals);
      std::size_t shortest = n;
      for (const auto& t : terminals) shortest = std::min(shortest, t.size());
      if (r.reduced_tokens.size() > shortest) ++suboptimal;
    }
  }
  // Greedy is not guaranteed minimal; report how often it was not.
  MESSAGE("greedy-suboptimal reductions: " << suboptimal << " of 300");
}

TEST_CASE("lexicon parsing and matching") {
  const auto lex = load_lexicon(fs::path(MODPIPE_FIXTURES) / "lexicon.txt");
  CHECK(lex == std::vector<std::string>{"badword", "slur phrase"});
  CHECK(lexicon_match("xxBADWORDxx", lex));
  CHECK(lexicon_match("a Slur Phrase here", lex));
  CHECK_FALSE(lexicon_match("slur", lex));
  CHECK(parse_lexicon("# only comments\n\n  \n").empty());
  CHECK_THROWS_AS(load_lexicon("/nonexistent/lexicon.txt"), NotFoundError);
}

TEST_CASE("keytoken_report on the planted-keyword fixture matches the lexicon fully") {
  const auto model = desk::planted_keyword_model();
  const auto d = texts({"you are a badword and a fool", "quiet river at dawn", "badword badword again",
                        "so much badword talk today"});
  const auto r = keytoken_report(model, d, fs::path(MODPIPE_FIXTURES) / "lexicon.txt");
  CHECK(r.results.size() == 3);
  REQUIRE(r.lexicon_match_fraction.has_value());
  CHECK(*r.lexicon_match_fraction == 1.0);
  CHECK(r.non_matching.empty());
  CHECK(r.mean_chars_after < r.mean_chars_before);
  for (const auto& x : r.results) CHECK(x.reduced_text() == "badword");
  CHECK(to_json(r)["results"].size() == 3);
}

TEST_CASE("keytoken_report without high scorers is empty") {
  const auto model = desk::planted_keyword_model();
  const auto r = keytoken_report(model, texts({"nothing here", "still nothing"}),
                                 std::vector<std::string>{"badword"});
  CHECK(r.results.empty());
  CHECK_FALSE(r.lexicon_match_fraction.has_value());
  CHECK_THROWS_AS(keytoken_report(model, texts({"x"}), fs::path("/nonexistent/lex.txt")), NotFoundError);
}

TEST_CASE("red-team cases are stored and become a regression suite") {
  const auto path = fs::temp_directory_path() / "modpipe-redteam.jsonl";
  fs::remove(path);
  CorpusStore store(path);
  CategoryScores none;
  none.fill(0.0);
  LabelVector hate = LabelVector::all(Label::negative);
  hate.set(Category::H, Label::positive);

  const auto cats = record_redteam_case(store, "I hate black cats!", none,
                                        LabelVector::all(Label::negative), "not hate", 5);
  CHECK_FALSE(cats.warning.has_value());
  CHECK(cats.sample.domain == Domain::target);
  CHECK(cats.sample.metadata.at("origin") == "redteam");
  CHECK(cats.sample.labels.at(0).role == Role::auditor);
  const auto people = record_redteam_case(store, "I hate black people!", none, hate, "", 6);
  CHECK(people.sample.consolidated->is_positive(Category::H));
  CHECK_FALSE(people.sample.consolidated->is_positive(Category::V));

  const auto dup = record_redteam_case(store, "I hate black cats!", none,
                                       LabelVector::all(Label::negative), "", 7);
  REQUIRE(dup.warning.has_value());
  CHECK(dup.warning->find(cats.sample.id) != std::string::npos);
  CHECK(dup.sample.id != cats.sample.id);

  const auto stored = store.load();
  CHECK(stored.size() == 3);

  // A model that fires H on the identity word alone gets the cat sentence wrong.
  const auto naive = desk::planted_keyword_model("black", Category::H);
  const auto report = evaluate_redteam(naive, stored);
  CHECK(report.cases.size() == 3);
  CHECK(report.failed == 2);
  CHECK(report.cases[1].passed);
  const auto& first = report.cases[0];
  CHECK(std::ranges::find(first.failures, Category::H) != first.failures.end());

  const auto quiet = desk::planted_keyword_model();
  const auto r2 = evaluate_redteam(quiet, stored);
  CHECK(r2.passed == 2);
  CHECK(r2.failed == 1);
  CHECK(to_json(r2)["failed"] == 1);
  CHECK_THROWS_AS(record_redteam_case(store, "   ", none, hate, ""), InputError);
  fs::remove(path);
}
