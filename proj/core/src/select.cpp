#include "modpipe/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "seeding.hpp"

namespace modpipe {
namespace {

using nlohmann::json;

std::uint64_t derive(std::uint64_t seed, const std::string& purpose) {
  return detail::derive_seed(seed, purpose);
}

Strategy parse_strategy(const std::string& s) {
  if (s == "random") return Strategy::random;
  if (s == "threshold") return Strategy::threshold;
  if (s == "uncertainty") return Strategy::uncertainty;
  throw InputError("unknown strategy: " + s);
}

double uncertainty_key(const CategoryScores& s) {
  double best = std::abs(s[0] - 0.5);
  for (std::size_t k = 1; k < kNumCategories; ++k) best = std::min(best, std::abs(s[k] - 0.5));
  return best;
}

std::size_t most_uncertain_category(const CategoryScores& s) {
  std::size_t arg = 0;
  for (std::size_t k = 1; k < kNumCategories; ++k) {
    if (std::abs(s[k] - 0.5) < std::abs(s[arg] - 0.5)) arg = k;
  }
  return arg;
}

bool exceeds(const CategoryScores& s, const std::array<double, kNumCategories>& tau) {
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    if (s[k] > tau[k]) return true;
  }
  return false;
}

// Category with the largest margin above its threshold.
std::optional<Category> threshold_trigger(const CategoryScores& s,
                                          const std::array<double, kNumCategories>& tau) {
  std::optional<std::size_t> arg;
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    if (s[k] <= tau[k]) continue;
    if (!arg || s[k] - tau[k] > s[*arg] - tau[*arg]) arg = k;
  }
  if (!arg) return std::nullopt;
  return kAllCategories[*arg];
}

json scores_json(const CategoryScores& s) {
  json j = json::object();
  for (auto c : kAllCategories) j[std::string(to_string(c))] = s[index_of(c)];
  return j;
}

CategoryScores scores_from_json(const json& j) {
  CategoryScores s{};
  for (auto c : kAllCategories) s[index_of(c)] = j.value(std::string(to_string(c)), 0.0);
  return s;
}

}  // namespace

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::threshold: return "threshold";
    case Strategy::uncertainty: return "uncertainty";
  }
  return "random";
}

void StrategyMix::validate() const {
  if (random < 0.0 || threshold < 0.0 || uncertainty < 0.0) {
    throw InputError("strategy fractions must be >= 0");
  }
  if (std::abs(random + threshold + uncertainty - 1.0) > 1e-9) {
    throw InputError("strategy fractions must sum to 1");
  }
  for (double t : tau) {
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("thresholds must lie in [0, 1]");
  }
}

json to_json(const StrategyMix& m) {
  json tau = json::object();
  for (auto c : kAllCategories) tau[std::string(to_string(c))] = m.tau[index_of(c)];
  return {{"random", m.random}, {"threshold", m.threshold}, {"uncertainty", m.uncertainty},
          {"tau", tau}};
}

StrategyMix strategy_mix_from_json(const json& j) {
  StrategyMix m;
  m.random = j.value("random", m.random);
  m.threshold = j.value("threshold", m.threshold);
  m.uncertainty = j.value("uncertainty", m.uncertainty);
  if (j.contains("tau")) {
    const auto& t = j["tau"];
    if (t.is_number()) {
      m.tau.fill(t.get<double>());
    } else {
      for (const auto& [k, v] : t.items()) m.tau[index_of(parse_category(k))] = v.get<double>();
    }
  }
  m.validate();
  return m;
}

std::vector<std::string> SelectionBatch::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

json to_json(const SelectionBatch& b) {
  json entries = json::array();
  for (const auto& e : b.entries) {
    entries.push_back({{"id", e.id},
                       {"strategy", to_string(e.strategy)},
                       {"trigger", e.trigger ? json(to_string(*e.trigger)) : json(nullptr)},
                       {"scores", scores_json(e.scores)},
                       {"weight", e.weight},
                       {"backfill", e.backfill}});
  }
  return {{"entries", entries}, {"warnings", b.warnings}};
}

SelectionBatch selection_batch_from_json(const json& j) {
  SelectionBatch b;
  try {
    for (const auto& e : j.at("entries")) {
      SelectionEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.strategy = parse_strategy(e.value("strategy", "random"));
      if (e.contains("trigger") && !e["trigger"].is_null()) {
        entry.trigger = parse_category(e["trigger"].get<std::string>());
      }
      if (e.contains("scores")) entry.scores = scores_from_json(e["scores"]);
      entry.weight = e.value("weight", 1.0);
      entry.backfill = e.value("backfill", false);
      b.entries.push_back(std::move(entry));
    }
    if (j.contains("warnings")) b.warnings = j["warnings"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed selection batch: ") + e.what());
  }
  return b;
}

void LoopConfig::validate() const {
  if (seed_set_size == 0 || pool_size == 0 || batch_size == 0) {
    throw InputError("loop sizes must be >= 1");
  }
  if (!(reweight_oversample >= 1.0)) throw InputError("reweight oversample must be >= 1");
}

json to_json(const LoopConfig& c) {
  return {{"seed_set_size", c.seed_set_size}, {"iterations", c.iterations},
          {"pool_size", c.pool_size},         {"batch_size", c.batch_size},
          {"reweight_key", c.reweight_key},   {"reweight_oversample", c.reweight_oversample},
          {"seed", c.seed}};
}

LoopConfig loop_config_from_json(const json& j) {
  LoopConfig c;
  c.seed_set_size = j.value("seed_set_size", c.seed_set_size);
  c.iterations = j.value("iterations", c.iterations);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.reweight_key = j.value("reweight_key", c.reweight_key);
  c.reweight_oversample = j.value("reweight_oversample", c.reweight_oversample);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::vector<std::string> select_random(std::span<const std::string> pool, std::size_t n,
                                       std::uint64_t seed) {
  if (n > pool.size()) {
    throw InputError("cannot draw " + std::to_string(n) + " from a pool of " +
                     std::to_string(pool.size()));
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

ThresholdSelection select_threshold(std::span<const std::string> pool,
                                    std::span<const CategoryScores> scores,
                                    const std::array<double, kNumCategories>& tau, std::size_t n,
                                    std::uint64_t seed) {
  if (scores.size() != pool.size()) throw DimensionError("scores do not cover the pool");
  std::vector<std::string> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (exceeds(scores[i], tau)) candidates.push_back(pool[i]);
  }
  ThresholdSelection out;
  if (candidates.size() <= n) {
    if (candidates.size() < n) {
      out.warning = "threshold pipeline found " + std::to_string(candidates.size()) +
                    " candidates for " + std::to_string(n) + " requested";
    }
    out.ids = std::move(candidates);
    return out;
  }
  out.ids = select_random(candidates, n, seed);
  return out;
}

std::vector<std::string> select_uncertainty(std::span<const std::string> pool,
                                            std::span<const CategoryScores> scores, std::size_t n) {
  if (scores.size() != pool.size()) throw DimensionError("scores do not cover the pool");
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) keyed.emplace_back(uncertainty_key(scores[i]), i);
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return pool[a.second] < pool[b.second];
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, keyed.size()); ++i) out.push_back(pool[keyed[i].second]);
  return out;
}

SelectionBatch metadata_reweight(std::span<const Candidate> candidates, const std::string& key,
                                 std::size_t n, std::uint64_t seed) {
  if (n > candidates.size()) {
    throw InputError("cannot draw " + std::to_string(n) + " from " +
                     std::to_string(candidates.size()) + " candidates");
  }
  std::map<std::string, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto it = candidates[i].metadata.find(key);
    if (it == candidates[i].metadata.end()) {
      throw InputError("sample " + candidates[i].id + " lacks metadata key " + key);
    }
    buckets[it->second].push_back(i);
  }
  struct Bucket {
    std::vector<std::size_t> items;  // remaining, in candidate order
    double weight;                   // per item: 1 / sqrt(original size)
  };
  std::vector<Bucket> bs;
  for (auto& [value, items] : buckets) {
    const double w = 1.0 / std::sqrt(static_cast<double>(items.size()));
    bs.push_back({std::move(items), w});
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SelectionBatch out;
  for (std::size_t draw = 0; draw < n; ++draw) {
    double total = 0.0;
    for (const auto& b : bs) total += b.weight * static_cast<double>(b.items.size());
    const double r = unit(rng) * total;
    std::size_t k = 0;
    double acc = 0.0;
    std::size_t last_nonempty = 0;
    for (; k < bs.size(); ++k) {
      if (bs[k].items.empty()) continue;
      last_nonempty = k;
      acc += bs[k].weight * static_cast<double>(bs[k].items.size());
      if (r < acc) break;
    }
    if (k == bs.size()) k = last_nonempty;  // rounding at the upper end
    auto& b = bs[k];
    std::uniform_int_distribution<std::size_t> pick(0, b.items.size() - 1);
    const auto j = pick(rng);
    const auto item = b.items[j];
    b.items.erase(b.items.begin() + static_cast<std::ptrdiff_t>(j));
    SelectionEntry e;
    e.id = candidates[item].id;
    e.weight = b.weight;
    out.entries.push_back(std::move(e));
  }
  return out;
}

SimulatedAnnotator::SimulatedAnnotator(const Dataset& truth, double flip_rate, std::uint64_t seed,
                                       Role role, std::string name)
    : truth_(&truth), flip_rate_(flip_rate), rng_(seed), role_(role), name_(std::move(name)) {
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw InputError("flip rate must lie in [0, 1]");
}

std::map<std::string, LabelVector> SimulatedAnnotator::label(std::span<const std::string> ids) {
  std::map<std::string, LabelVector> out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> cat(0, kNumCategories - 1);
  for (const auto& id : ids) {
    const auto* s = truth_->find(id);
    if (s == nullptr || !s->consolidated) throw OracleError("no ground truth for " + id);
    LabelVector v = *s->consolidated;
    if (flip_rate_ > 0.0 && unit(rng_) < flip_rate_) {
      if (is_undesired(v)) {
        v = LabelVector::all(Label::negative);
      } else {
        LabelVector f = LabelVector::all(Label::negative);
        f.set(kAllCategories[cat(rng_)], Label::positive);
        v = normalize(f).vector;
      }
    }
    out.emplace(id, v);
  }
  return out;
}

SelectionBatch select_batch(const Dataset& pool, std::span<const CategoryScores> scores,
                            const StrategyMix& mix, const IterationConfig& cfg) {
  mix.validate();
  if (scores.size() != pool.size()) throw DimensionError("scores do not cover the pool");
  const std::size_t n = std::min(cfg.batch_size, pool.size());
  const bool reweight = !cfg.reweight_key.empty();
  const double factor = reweight ? cfg.reweight_oversample : 1.0;

  auto share = [&](double f) {
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(n) * factor));
  };
  const std::size_t total = std::min(pool.size(), static_cast<std::size_t>(
                                                      std::llround(static_cast<double>(n) * factor)));
  std::size_t want_random = std::min(share(mix.random), total);
  std::size_t want_threshold = std::min(share(mix.threshold), total - want_random);
  std::size_t want_uncertainty = total - want_random - want_threshold;

  SelectionBatch raw;
  std::unordered_set<std::string> taken;
  std::vector<std::size_t> entry_index;  // pool index per raw entry
  auto add = [&](const std::string& id, Strategy st, bool backfill) {
    const auto i = *pool.index_of(id);
    SelectionEntry e;
    e.id = id;
    e.strategy = st;
    e.scores = scores[i];
    e.backfill = backfill;
    if (st == Strategy::threshold) e.trigger = threshold_trigger(scores[i], mix.tau);
    if (st == Strategy::uncertainty) e.trigger = kAllCategories[most_uncertain_category(scores[i])];
    raw.entries.push_back(std::move(e));
    entry_index.push_back(i);
    taken.insert(id);
  };
  auto remaining = [&](std::vector<std::string>& ids, std::vector<CategoryScores>& sc) {
    ids.clear();
    sc.clear();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken.count(pool[i].id) != 0) continue;
      ids.push_back(pool[i].id);
      sc.push_back(scores[i]);
    }
  };

  std::vector<std::string> ids;
  std::vector<CategoryScores> sc;
  if (want_random > 0) {
    remaining(ids, sc);
    for (auto& id : select_random(ids, want_random, cfg.seed)) add(id, Strategy::random, false);
  }
  std::size_t shortfall = 0;
  if (want_threshold > 0) {
    remaining(ids, sc);
    auto t = select_threshold(ids, sc, mix.tau, want_threshold, derive(cfg.seed, "threshold"));
    if (t.warning) raw.warnings.push_back(*t.warning);
    shortfall += want_threshold - t.ids.size();
    for (auto& id : t.ids) add(id, Strategy::threshold, false);
  }
  if (want_uncertainty > 0) {
    remaining(ids, sc);
    auto u = select_uncertainty(ids, sc, want_uncertainty);
    shortfall += want_uncertainty - u.size();
    for (auto& id : u) add(id, Strategy::uncertainty, false);
  }
  if (shortfall > 0) {
    remaining(ids, sc);
    const auto k = std::min(shortfall, ids.size());
    raw.warnings.push_back("backfilled " + std::to_string(k) + " of " +
                           std::to_string(shortfall) + " shortfall slots with random draws");
    for (auto& id : select_random(ids, k, derive(cfg.seed, "backfill"))) {
      add(id, Strategy::random, true);
    }
  }

  if (!reweight) return raw;

  std::vector<Candidate> candidates;
  candidates.reserve(raw.entries.size());
  for (std::size_t e = 0; e < raw.entries.size(); ++e) {
    candidates.push_back({raw.entries[e].id, pool[entry_index[e]].metadata});
  }
  auto drawn = metadata_reweight(candidates, cfg.reweight_key, std::min(n, candidates.size()),
                                 derive(cfg.seed, "reweight"));
  std::map<std::string, const SelectionEntry*> by_id;
  for (const auto& e : raw.entries) by_id[e.id] = &e;
  SelectionBatch out;
  out.warnings = raw.warnings;
  for (auto& d : drawn.entries) {
    SelectionEntry e = *by_id.at(d.id);
    e.weight = d.weight;
    out.entries.push_back(std::move(e));
  }
  return out;
}

IterationResult run_iteration(const Model& model, const Dataset& pool, const StrategyMix& mix,
                              const IterationConfig& cfg, Oracle& oracle, Dataset& training) {
  const auto scores = score_all(model, pool);
  IterationResult result;
  result.batch = select_batch(pool, scores, mix, cfg);
  const auto ids = result.batch.ids();
  const auto labels = oracle.label(ids);

  std::vector<Sample> fresh;
  fresh.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = labels.find(id);
    if (it == labels.end()) throw OracleError("oracle returned no label for " + id);
    if (training.contains(id)) throw DuplicateIdError(id);
    Sample s = *pool.find(id);
    s.labels.clear();
    s.consolidated.reset();
    s.labels.push_back({oracle.name(), oracle.role(), it->second, cfg.timestamp});
    fresh.push_back(std::move(s));
  }
  for (auto& s : fresh) training.add(std::move(s));
  result.labeled = fresh.size();
  return result;
}

json to_json(const LoopResult& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.evaluations.size(); ++i) {
    json row = {{"iteration", i}, {"eval", to_json(r.evaluations[i])}};
    if (i < r.checkpoints.size()) row["checkpoint"] = r.checkpoints[i];
    if (i < r.checkpoint_paths.size()) row["checkpoint_path"] = r.checkpoint_paths[i].string();
    if (i < r.batches.size()) row["selected"] = r.batches[i].entries.size();
    rows.push_back(std::move(row));
  }
  return {{"evaluations", rows}, {"final_training_size", r.final_training.size()}};
}

LoopResult run_loop(const LoopInputs& inputs, const LoopConfig& loop, const ModelSpec& spec,
                    const TrainConfig& train_cfg, Oracle& oracle) {
  loop.validate();
  if (inputs.initial == nullptr || inputs.pool_source == nullptr || inputs.validation == nullptr) {
    throw InputError("loop needs an initial set, a pool source and a validation set");
  }
  if (inputs.out_dir) std::filesystem::create_directories(*inputs.out_dir);

  LoopResult result;
  Dataset training = *inputs.initial;
  std::unordered_set<std::string> seen;
  for (const auto& s : training) seen.insert(s.id);

  auto train_and_eval = [&](std::size_t i) {
    TrainData data;
    data.labeled = &training;
    auto trained = train(data, spec, train_cfg);
    auto table = evaluate(trained.model, *inputs.validation);
    result.evaluations.push_back(table);
    result.checkpoints.push_back(table.checkpoint);
    if (inputs.out_dir) {
      const auto path = *inputs.out_dir / ("iter-" + std::to_string(i) + ".ckpt");
      save_checkpoint(trained.model, path);
      result.checkpoint_paths.push_back(path);
    }
    return std::move(trained.model);
  };

  for (std::size_t i = 0; i < loop.iterations; ++i) {
    const Model model = train_and_eval(i);

    std::vector<std::string> unseen;
    for (const auto& s : *inputs.pool_source) {
      if (seen.count(s.id) == 0) unseen.push_back(s.id);
    }
    const auto draw = select_random(unseen, std::min(loop.pool_size, unseen.size()),
                                    derive(loop.seed, "pool:" + std::to_string(i)));
    Dataset pool("pool-" + std::to_string(i));
    for (const auto& id : draw) pool.add(*inputs.pool_source->find(id));

    IterationConfig it;
    it.batch_size = loop.batch_size;
    it.reweight_key = loop.reweight_key;
    it.reweight_oversample = loop.reweight_oversample;
    it.seed = derive(loop.seed, "select:" + std::to_string(i));
    it.timestamp = static_cast<std::int64_t>(i + 1);
    const auto& mix = i < inputs.schedule.size() ? inputs.schedule[i] : inputs.mix;
    auto step = run_iteration(model, pool, mix, it, oracle, training);
    for (const auto& e : step.batch.entries) seen.insert(e.id);
    result.batches.push_back(std::move(step.batch));
  }
  train_and_eval(loop.iterations);
  result.final_training = std::move(training);
  return result;
}

}  // namespace modpipe
