#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "modpipe/desk.hpp"
#include "modpipe/error.hpp"
#include "modpipe/evalx.hpp"

using namespace modpipe;
namespace fs = std::filesystem;

namespace {

// AP from the definition: for every positive item, precision over the items
// ranked at or above it (higher score, or equal score and earlier position).
// Terms are summed in rank order so the comparison can be exact.
double brute_ap(const std::vector<double>& s, const std::vector<bool>& y) {
  std::vector<std::pair<std::size_t, double>> terms;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    std::size_t above = 0, hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] > s[i] || (s[j] == s[i] && j <= i)) {
        ++above;
        hits += y[j];
      }
    }
    terms.emplace_back(above, static_cast<double>(hits) / static_cast<double>(above));
  }
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (const auto& t : terms) total += t.second;
  return total / static_cast<double>(terms.size());
}

fs::path write_temp(const std::string& name, const std::string& content) {
  const auto p = fs::temp_directory_path() / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

Sample labeled(const std::string& id, const std::string& text, const LabelVector& v) {
  Sample s;
  s.id = id;
  s.text = text;
  s.labels.push_back({"a", Role::annotator, v, 0});
  return s;
}

}  // namespace

TEST_CASE("average_precision worked examples") {
  CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.7, 0.6}, std::vector<bool>{true, false, true, false}) ==
        doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<bool>{true, true, false, false}) == 1.0);
  CHECK(average_precision(std::vector<double>{0.1, 0.2, 0.3}, std::vector<bool>{false, false, true}) == 1.0);
  CHECK_THROWS_AS(average_precision(std::vector<double>{0.1, 0.2}, std::vector<bool>{false, false}),
                  UndefinedMetricError);
  CHECK_THROWS_AS(average_precision(std::vector<double>{0.1}, std::vector<bool>{true, false}), DimensionError);
}

TEST_CASE("ties follow input order") {
  // Equal scores: the earlier item ranks first.
  CHECK(average_precision(std::vector<double>{0.5, 0.5}, std::vector<bool>{true, false}) == 1.0);
  CHECK(average_precision(std::vector<double>{0.5, 0.5}, std::vector<bool>{false, true}) == 0.5);
}

TEST_CASE("average_precision equals the brute-force definition for n <= 200") {
  std::mt19937_64 rng(41);
  for (int it = 0; it < 300; ++it) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<double> s(n);
    std::vector<bool> y(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 20) / 20.0;  // many ties
      y[i] = rng() % 3 == 0;
      any = any || y[i];
    }
    if (!any) y[0] = true;
    CHECK(average_precision(s, y) == brute_ap(s, y));
  }
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 2 + rng() % 100;
    std::vector<double> s(n), t(n), z(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(u(rng) * 30) / 30;
      t[i] = std::exp(3 * s[i]) - 7;
      z[i] = std::log(s[i] + 1e-3);
      y[i] = i == 0 || rng() % 2 == 0;
    }
    const double ap = average_precision(s, y);
    CHECK(average_precision(t, y) == ap);
    CHECK(average_precision(z, y) == ap);
  }
}

TEST_CASE("random scores give AP close to the positive rate") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double rho : {0.1, 0.3}) {
    double sum = 0.0;
    constexpr int kTrials = 400;
    for (int t = 0; t < kTrials; ++t) {
      std::vector<double> s(2000);
      std::vector<bool> y(2000);
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = u(rng);
        y[i] = u(rng) < rho;
      }
      sum += average_precision(s, y);
    }
    CHECK(sum / kTrials == doctest::Approx(rho).epsilon(0.05));
  }
}

TEST_CASE("evaluate_scores: n/a cells, label filtering, duplication invariance") {
  Dataset d("tiny");
  const std::vector<double> hr{0.9, 0.2, 0.7, 0.4, 0.6};
  const std::vector<bool> pos{true, false, false, true, false};
  std::vector<CategoryScores> scores;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    LabelVector v;
    v.set(Category::HR, pos[i] ? Label::positive : Label::negative);
    v.set(Category::V, Label::negative);
    d.add(labeled("e" + std::to_string(i), "t", v));
    CategoryScores sc;
    sc.fill(0.5);
    sc[index_of(Category::HR)] = hr[i];
    scores.push_back(sc);
  }
  Sample unlabeled_for_hr = labeled("e9", "t", LabelVector::all(Label::unlabeled));
  unlabeled_for_hr.labels[0].vector.set(Category::V, Label::negative);
  d.add(unlabeled_for_hr);
  CategoryScores extra;
  extra.fill(0.99);
  scores.push_back(extra);

  const auto t = evaluate_scores(scores, d, "ckpt");
  const auto& row = t.row(Category::HR);
  CHECK(row.total == 5);
  CHECK(row.positives == 2);
  CHECK(*row.auprc == doctest::Approx(brute_ap(hr, pos)));
  CHECK_FALSE(t.row(Category::V).auprc.has_value());
  CHECK(t.row(Category::V).total == 6);
  CHECK_FALSE(t.row(Category::S).auprc.has_value());
  CHECK(t.row(Category::S).total == 0);
  CHECK(*t.mean_auprc() == *row.auprc);
  CHECK(to_text(t).find("n/a") != std::string::npos);
  CHECK(to_json(t)["checkpoint"] == "ckpt");
  CHECK(eval_table_from_json(to_json(t)).row(Category::HR).auprc == row.auprc);

  Dataset twice("twice");
  std::vector<CategoryScores> s2;
  for (int rep = 0; rep < 2; ++rep) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      Sample s = d[i];
      s.id += "-" + std::to_string(rep);
      twice.add(s);
      s2.push_back(scores[i]);
    }
  }
  // Step-wise AP is not duplication invariant in general: P,N,N,P,N gives
  // 0.75 but its doubled ranking gives (1 + 1 + 3/7 + 4/8) / 4.
  std::vector<double> hr2;
  std::vector<bool> pos2;
  for (double x : hr) hr2.insert(hr2.end(), {x, x});
  for (bool b : pos) pos2.insert(pos2.end(), {b, b});
  CHECK(*row.auprc == doctest::Approx(0.75));
  CHECK(*evaluate_scores(s2, twice).row(Category::HR).auprc ==
        doctest::Approx((2.0 + 3.0 / 7.0 + 0.5) / 4.0));
  CHECK(average_precision(hr2, pos2) == brute_ap(hr2, pos2));
  // It is invariant when the ranking is perfect.
  const std::vector<double> ps{0.9, 0.8, 0.3, 0.9, 0.8, 0.3};
  CHECK(average_precision(ps, std::vector<bool>{true, true, false, true, true, false}) == 1.0);
  CHECK_THROWS_AS(evaluate_scores(std::span(scores).first(2), d), DimensionError);
}

TEST_CASE("a model trained on a separable toy set ranks perfectly") {
  Dataset d("sep");
  std::mt19937_64 rng(44);
  const std::vector<std::string> words{"river", "table", "green", "seven", "pencil", "train"};
  for (int i = 0; i < 400; ++i) {
    const bool bad = i % 4 == 0;
    std::string text = words[rng() % 6] + " " + words[rng() % 6];
    if (bad) text += " threatword";
    LabelVector v = LabelVector::all(Label::negative);
    if (bad) {
      v.set(Category::V, Label::positive);
      v.set(Category::HR, Label::positive);
    }
    d.add(labeled("sep" + std::to_string(1000 + i), text, v));
  }
  TrainData td;
  td.labeled = &d;
  const auto model = train(td, desk::model_spec(), desk::train_config()).model;
  const auto t = evaluate(model, d);
  CHECK(*t.row(Category::V).auprc == 1.0);
  CHECK(*t.row(Category::HR).auprc == 1.0);
  CHECK_FALSE(t.row(Category::S).auprc.has_value());
}

TEST_CASE("adapt_external maps identity_hate to H") {
  const auto p = write_temp("modpipe-jigsaw.jsonl",
                            R"({"text": "they are vermin", "toxic": 1, "obscene": 0, "threat": 0, "identity_hate": 1})"
                            "\n"
                            R"({"text": "nice day", "toxic": 0, "obscene": 0, "threat": 0, "identity_hate": 0})"
                            "\n"
                            R"({"text": "partial", "toxic": 1})"
                            "\n");
  const auto r = adapt_external(p, TaxonomyMapping::jigsaw(), {});
  CHECK(r.dataset.size() == 2);
  CHECK(r.skipped == 1);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].find("line 3") != std::string::npos);
  const auto& hate = *r.dataset[0].consolidated;
  CHECK(hate.is_positive(Category::H));
  CHECK(hate.is_positive(Category::HR));
  CHECK_FALSE(hate.is_positive(Category::V));
  CHECK_FALSE(r.dataset[1].consolidated->is_positive(Category::H));
  fs::remove(p);
}

TEST_CASE("adapt_external: empty file, thresholds, csv and schema errors") {
  const auto empty = write_temp("modpipe-empty.jsonl", "");
  CHECK(adapt_external(empty, TaxonomyMapping::jigsaw(), {}).dataset.empty());

  const auto mapping = TaxonomyMapping::load(std::string(MODPIPE_FIXTURES) + "/mapping.json");
  const auto scored = write_temp("modpipe-scored.jsonl",
                                 R"({"text": "x", "sexually_explicit": 0.2, "profanity": 0.9, "flirtation": 0.1, "identity_attack": 0.3, "threat": 0.6})"
                                 "\n");
  LabelFieldSpec spec;
  spec.threshold = 0.5;
  const auto r = adapt_external(scored, mapping, spec);
  REQUIRE(r.dataset.size() == 1);
  const auto& v = *r.dataset[0].consolidated;
  CHECK(v.is_positive(Category::S));
  CHECK_FALSE(v.is_positive(Category::H));
  CHECK(v.is_positive(Category::V));
  // Scores without a threshold are not binary.
  CHECK(adapt_external(scored, mapping, {}).skipped == 1);

  const auto csv = write_temp("modpipe-ext.csv",
                              "comment,toxic,obscene,threat,identity_hate\n\"a, b\",0,1,0,0\n");
  LabelFieldSpec cs;
  cs.text_field = "comment";
  const auto rc = adapt_external(csv, TaxonomyMapping::jigsaw(), cs);
  REQUIRE(rc.dataset.size() == 1);
  CHECK(rc.dataset[0].text == "a, b");
  CHECK(rc.dataset[0].consolidated->is_positive(Category::S));

  try {
    adapt_external(csv, TaxonomyMapping::jigsaw(), {});
    FAIL("expected MappingError");
  } catch (const MappingError& e) {
    CHECK(std::string(e.what()).find("text") != std::string::npos);
  }
  CHECK_THROWS_AS(adapt_external("/nonexistent/x.jsonl", mapping, {}), NotFoundError);
  for (const auto& p : {empty, scored, csv}) fs::remove(p);
}
