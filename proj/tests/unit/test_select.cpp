#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "modpipe/desk.hpp"
#include "modpipe/error.hpp"
#include "modpipe/select.hpp"

using namespace modpipe;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> ids(std::size_t n, const std::string& prefix = "p") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(1000 + i));
  return out;
}

CategoryScores flat(double v) {
  CategoryScores s;
  s.fill(v);
  return s;
}

std::vector<CategoryScores> random_scores(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CategoryScores> out(n);
  for (auto& s : out) {
    for (auto& v : s) v = std::round(u(rng) * 50.0) / 50.0;  // ties are common
  }
  return out;
}

bool unique(const std::vector<std::string>& v) {
  return std::set<std::string>(v.begin(), v.end()).size() == v.size();
}

Dataset scored_pool(std::size_t n) {
  Dataset d("pool");
  for (const auto& id : ids(n)) {
    Sample s;
    s.id = id;
    s.text = "text " + id;
    s.metadata["channel"] = std::stoi(id.substr(1)) % 4 == 0 ? "rare" : "common";
    s.labels.push_back({"truth", Role::oracle, LabelVector::all(Label::negative), 0});
    d.add(s);
  }
  return d;
}

class FailingOracle : public Oracle {
 public:
  std::map<std::string, LabelVector> label(std::span<const std::string>) override {
    throw OracleError("offline");
  }
};

}  // namespace

TEST_CASE("select_random edge cases and determinism") {
  const auto pool = ids(30);
  auto all = select_random(pool, 30, 1);
  std::sort(all.begin(), all.end());
  CHECK(all == pool);
  CHECK(select_random(pool, 0, 1).empty());
  CHECK_THROWS_AS(select_random(pool, 31, 1), InputError);
  CHECK(select_random(pool, 10, 7) == select_random(pool, 10, 7));
  CHECK(unique(select_random(pool, 25, 3)));
}

TEST_CASE("select_random is uniform over 10^4 seeded draws") {
  const auto pool = ids(20);
  std::map<std::string, double> count;
  constexpr int kDraws = 10000;
  constexpr std::size_t kTake = 5;
  for (int s = 0; s < kDraws; ++s) {
    for (const auto& id : select_random(pool, kTake, static_cast<std::uint64_t>(s))) count[id] += 1;
  }
  const double p = static_cast<double>(kTake) / pool.size();
  const double expected = kDraws * p;
  const double sigma = std::sqrt(kDraws * p * (1 - p));
  double chi2 = 0.0;
  for (const auto& id : pool) {
    CHECK(std::abs(count[id] - expected) <= 3 * sigma);
    chi2 += (count[id] - expected) * (count[id] - expected) / expected;
  }
  // 19 degrees of freedom; 0.999 quantile is 43.8.
  CHECK(chi2 < 43.8);
}

TEST_CASE("select_threshold") {
  const auto pool = ids(40);
  std::vector<CategoryScores> low(40, flat(0.2));
  std::array<double, kNumCategories> tau;
  tau.fill(0.5);
  auto none = select_threshold(pool, low, tau, 5, 1);
  CHECK(none.ids.empty());
  CHECK(none.warning.has_value());

  auto some = low;
  for (int i : {3, 9, 27}) some[static_cast<std::size_t>(i)][index_of(Category::SH)] = 0.9;
  auto exact = select_threshold(pool, some, tau, 3, 1);
  std::sort(exact.ids.begin(), exact.ids.end());
  CHECK(exact.ids == std::vector<std::string>{pool[3], pool[9], pool[27]});
  CHECK_FALSE(exact.warning.has_value());

  // Strictly greater than tau.
  some[5][0] = 0.5;
  CHECK(select_threshold(pool, some, tau, 10, 1).ids.size() == 3);
}

TEST_CASE("select_threshold on a planted 5% pool selects only high scorers") {
  const auto pool = ids(1000);
  std::vector<CategoryScores> sc(1000, flat(0.1));
  std::set<std::string> planted;
  for (std::size_t i = 0; i < 1000; i += 20) {
    sc[i][index_of(Category::V)] = 0.95;
    planted.insert(pool[i]);
  }
  std::array<double, kNumCategories> tau;
  tau.fill(0.5);
  const auto t = select_threshold(pool, sc, tau, 30, 4);
  CHECK(t.ids.size() == 30);
  for (const auto& id : t.ids) CHECK(planted.count(id) == 1);
}

TEST_CASE("select_threshold candidates agree with a brute-force predicate") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 40; ++it) {
    const std::size_t n = 1 + rng() % 1000;
    const auto pool = ids(n);
    const auto sc = random_scores(n, rng);
    std::array<double, kNumCategories> tau;
    for (auto& t : tau) t = 0.5 + static_cast<double>(rng() % 40) / 100.0;
    std::set<std::string> qualifying;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < kNumCategories; ++k) {
        if (sc[i][k] > tau[k]) {
          qualifying.insert(pool[i]);
          break;
        }
      }
    }
    const auto got = select_threshold(pool, sc, tau, n, rng());
    CHECK(std::set<std::string>(got.ids.begin(), got.ids.end()) == qualifying);
    CHECK(unique(got.ids));
  }
}

TEST_CASE("select_uncertainty") {
  const std::vector<std::string> pool{"a", "b"};
  std::vector<CategoryScores> sc{flat(0.5), flat(0.9)};
  CHECK(select_uncertainty(pool, sc, 1) == std::vector<std::string>{"a"});

  sc = {flat(0.1), flat(0.45)};
  sc[0][1] = 0.52;
  CHECK(select_uncertainty(pool, sc, 2) == std::vector<std::string>{"a", "b"});
  CHECK(select_uncertainty(pool, sc, 5).size() == 2);
}

TEST_CASE("select_uncertainty matches a brute-force ranking and ignores pool order") {
  std::mt19937_64 rng(12);
  for (int it = 0; it < 40; ++it) {
    const std::size_t n = 1 + rng() % 1000;
    const auto pool = ids(n);
    const auto sc = random_scores(n, rng);
    std::vector<std::pair<double, std::string>> ref;
    for (std::size_t i = 0; i < n; ++i) {
      double m = 1.0;
      for (double v : sc[i]) m = std::min(m, std::abs(v - 0.5));
      ref.emplace_back(m, pool[i]);
    }
    std::sort(ref.begin(), ref.end());
    const std::size_t k = 1 + rng() % n;
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < k; ++i) expected.push_back(ref[i].second);
    CHECK(select_uncertainty(pool, sc, k) == expected);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> p2;
    std::vector<CategoryScores> s2;
    for (auto i : perm) {
      p2.push_back(pool[i]);
      s2.push_back(sc[i]);
    }
    CHECK(select_uncertainty(p2, s2, k) == expected);
  }
}

TEST_CASE("metadata_reweight: buckets of 9 and 1 draw in ratio 3:1") {
  std::vector<Candidate> cands;
  for (int i = 0; i < 9; ++i) cands.push_back({"a" + std::to_string(i), {{"channel", "A"}}});
  cands.push_back({"b0", {{"channel", "B"}}});
  constexpr int kRuns = 10000;
  double a = 0;
  for (int s = 0; s < kRuns; ++s) {
    const auto b = metadata_reweight(cands, "channel", 1, static_cast<std::uint64_t>(s));
    REQUIRE(b.entries.size() == 1);
    a += b.entries[0].id[0] == 'a' ? 1 : 0;
  }
  const double p = 0.75;
  CHECK(std::abs(a - kRuns * p) <= 3 * std::sqrt(kRuns * p * (1 - p)));
  const auto b = metadata_reweight(cands, "channel", 10, 1);
  CHECK(b.entries.size() == 10);
  for (const auto& e : b.entries) {
    CHECK(e.weight == doctest::Approx(e.id[0] == 'a' ? 1.0 / 3.0 : 1.0));
  }
}

TEST_CASE("metadata_reweight: single bucket is uniform, missing key names the sample") {
  std::vector<Candidate> cands;
  for (int i = 0; i < 10; ++i) cands.push_back({"c" + std::to_string(i), {{"k", "same"}}});
  std::map<std::string, double> count;
  for (int s = 0; s < 10000; ++s) count[metadata_reweight(cands, "k", 1, s).entries[0].id] += 1;
  for (const auto& [id, c] : count) CHECK(std::abs(c - 1000.0) <= 3 * std::sqrt(10000 * 0.1 * 0.9));

  cands.push_back({"orphan", {}});
  try {
    metadata_reweight(cands, "k", 2, 1);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("orphan") != std::string::npos);
  }
}

TEST_CASE("select_batch with mix (1,0,0) is select_random") {
  const auto pool = scored_pool(200);
  std::mt19937_64 rng(3);
  const auto sc = random_scores(200, rng);
  IterationConfig cfg;
  cfg.batch_size = 40;
  cfg.seed = 17;
  const auto b = select_batch(pool, sc, StrategyMix{1.0, 0.0, 0.0}, cfg);
  CHECK(b.ids() == select_random(ids(200), 40, 17));
  for (const auto& e : b.entries) CHECK(e.strategy == Strategy::random);
}

TEST_CASE("select_batch allocation, uniqueness and backfill") {
  const auto pool = scored_pool(300);
  std::vector<CategoryScores> sc(300, flat(0.05));
  for (std::size_t i = 0; i < 5; ++i) sc[i * 7][index_of(Category::H)] = 0.9;
  IterationConfig cfg;
  cfg.batch_size = 60;
  cfg.seed = 2;
  const auto b = select_batch(pool, sc, StrategyMix{}, cfg);
  CHECK(b.entries.size() == 60);
  CHECK(unique(b.ids()));
  std::map<Strategy, std::size_t> by;
  std::size_t backfill = 0;
  for (const auto& e : b.entries) {
    by[e.strategy] += 1;
    backfill += e.backfill ? 1 : 0;
    if (e.strategy == Strategy::threshold) CHECK(e.trigger == Category::H);
  }
  // Random runs first and may already hold some of the five high scorers.
  std::size_t planted_random = 0;
  for (const auto& e : b.entries) {
    const auto i = static_cast<std::size_t>(std::stoi(e.id.substr(1)) - 1000);
    if (i % 7 == 0 && i < 35 && e.strategy == Strategy::random && !e.backfill) ++planted_random;
  }
  CHECK(by[Strategy::threshold] + planted_random == 5);
  CHECK(by[Strategy::uncertainty] == 20);
  CHECK(backfill == 20 - by[Strategy::threshold]);
  CHECK(b.warnings.size() == 2);
  CHECK(select_batch(pool, sc, StrategyMix{}, cfg).ids() == b.ids());
}

TEST_CASE("select_batch with a reweight key keeps the batch size") {
  const auto pool = scored_pool(400);
  std::mt19937_64 rng(5);
  const auto sc = random_scores(400, rng);
  IterationConfig cfg;
  cfg.batch_size = 50;
  cfg.reweight_key = "channel";
  const auto b = select_batch(pool, sc, StrategyMix{}, cfg);
  CHECK(b.entries.size() == 50);
  CHECK(unique(b.ids()));
}

TEST_CASE("mix validation") {
  CHECK_THROWS_AS(StrategyMix({0.5, 0.5, 0.5}).validate(), InputError);
  CHECK_THROWS_AS(StrategyMix({-0.1, 0.6, 0.5}).validate(), InputError);
  StrategyMix m;
  m.tau[2] = 1.5;
  CHECK_THROWS_AS(m.validate(), InputError);
  StrategyMix n{0.2, 0.3, 0.5};
  n.tau[4] = 0.7;
  const auto back = strategy_mix_from_json(to_json(n));
  CHECK(back.uncertainty == 0.5);
  CHECK(back.tau[4] == 0.7);
}

TEST_CASE("run_iteration appends oracle labels and is atomic on oracle failure") {
  const auto pool = scored_pool(100);
  ModelSpec spec;
  spec.featurizer.dimensionality = 1u << 10;
  spec.network.d_model = 4;
  spec.network.critic_hidden = {2};
  const Model model(spec);
  IterationConfig cfg;
  cfg.batch_size = 10;
  cfg.timestamp = 42;
  Dataset training("train");

  FailingOracle broken;
  CHECK_THROWS_AS(run_iteration(model, pool, StrategyMix{}, cfg, broken, training), OracleError);
  CHECK(training.empty());

  SimulatedAnnotator oracle(pool, 0.0, 0, Role::annotator, "sim");
  const auto r = run_iteration(model, pool, StrategyMix{}, cfg, oracle, training);
  CHECK(r.labeled == 10);
  CHECK(training.size() == 10);
  for (const auto& s : training) {
    REQUIRE(s.labels.size() == 1);
    CHECK(s.labels[0].role == Role::annotator);
    CHECK(s.labels[0].annotator_id == "sim");
    CHECK(s.labels[0].timestamp == 42);
  }
}

TEST_CASE("simulated annotator flips at the configured rate") {
  const auto pool = scored_pool(2000);
  SimulatedAnnotator noisy(pool, 0.2, 9);
  const auto all = ids(2000);
  const auto out = noisy.label(all);
  std::size_t flipped = 0;
  for (const auto& [id, v] : out) flipped += is_undesired(v) ? 1 : 0;
  CHECK(std::abs(static_cast<double>(flipped) - 400.0) <= 3 * std::sqrt(2000 * 0.2 * 0.8));
  CHECK_THROWS_AS(noisy.label(std::vector<std::string>{"missing"}), OracleError);
  CHECK_THROWS_AS(SimulatedAnnotator(pool, 1.5), InputError);
}

TEST_CASE("run_loop: N = 0 trains once; N = 2 gives three rows and grows the set") {
  desk::Language lang(8);
  desk::CorpusSpec c;
  c.size = 200;
  c.event_rates = desk::uniform_rates(0.04);
  c.seed = 1;
  const auto initial = desk::generate(lang, c);
  c.id_prefix = "pool";
  c.size = 600;
  c.seed = 2;
  const auto pool = desk::generate(lang, c);
  c.id_prefix = "val";
  c.size = 200;
  c.seed = 3;
  const auto val = desk::generate(lang, c);

  auto tc = desk::train_config();
  tc.max_epochs = 2;
  LoopInputs in;
  in.initial = &initial;
  in.pool_source = &pool;
  in.validation = &val;
  LoopConfig lc;
  lc.iterations = 0;
  lc.pool_size = 300;
  lc.batch_size = 50;
  SimulatedAnnotator oracle(pool);
  const auto zero = run_loop(in, lc, desk::model_spec(), tc, oracle);
  CHECK(zero.evaluations.size() == 1);
  CHECK(zero.batches.empty());
  CHECK(zero.final_training.size() == 200);

  const auto dir = fs::temp_directory_path() / "modpipe-test-loop";
  fs::remove_all(dir);
  in.out_dir = dir;
  lc.iterations = 2;
  const auto two = run_loop(in, lc, desk::model_spec(), tc, oracle);
  CHECK(two.evaluations.size() == 3);
  CHECK(two.checkpoints.size() == 3);
  CHECK(two.batches.size() == 2);
  CHECK(two.final_training.size() == 300);
  for (const auto& p : two.checkpoint_paths) CHECK(fs::exists(p));
  CHECK(to_json(two)["evaluations"].size() == 3);
  std::set<std::string> picked;
  for (const auto& b : two.batches) {
    for (const auto& id : b.ids()) CHECK(picked.insert(id).second);
  }
}
