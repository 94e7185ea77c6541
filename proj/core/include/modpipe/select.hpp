#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/corpus.hpp"
#include "modpipe/evalx.hpp"
#include "modpipe/model.hpp"
#include "modpipe/train.hpp"

namespace modpipe {

enum class Strategy : std::uint8_t { random, threshold, uncertainty };
std::string_view to_string(Strategy s) noexcept;

struct StrategyMix {
  double random = 1.0 / 3.0;
  double threshold = 1.0 / 3.0;
  double uncertainty = 1.0 / 3.0;
  std::array<double, kNumCategories> tau = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};

  // Throws InputError unless fractions are >= 0 and sum to 1 (1e-9).
  void validate() const;
};

nlohmann::json to_json(const StrategyMix& m);
StrategyMix strategy_mix_from_json(const nlohmann::json& j);

struct SelectionEntry {
  std::string id;
  Strategy strategy = Strategy::random;
  std::optional<Category> trigger;
  CategoryScores scores{};
  double weight = 1.0;
  bool backfill = false;  // random draw covering another strategy's shortfall
};

struct SelectionBatch {
  std::vector<SelectionEntry> entries;
  std::vector<std::string> warnings;

  std::vector<std::string> ids() const;
};

nlohmann::json to_json(const SelectionBatch& b);
SelectionBatch selection_batch_from_json(const nlohmann::json& j);

struct LoopConfig {
  std::size_t seed_set_size = 6000;
  std::size_t iterations = 3;
  std::size_t pool_size = 50000;
  std::size_t batch_size = 2000;
  // Metadata key for sqrt reweighting of the aggregated batch; empty: off.
  std::string reweight_key;
  // Each pipeline draws this many times its allocation before reweighting.
  double reweight_oversample = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const LoopConfig& c);
LoopConfig loop_config_from_json(const nlohmann::json& j);

// Uniform without replacement. Throws InputError if n > |pool|.
std::vector<std::string> select_random(std::span<const std::string> pool, std::size_t n,
                                       std::uint64_t seed);

struct ThresholdSelection {
  std::vector<std::string> ids;
  std::optional<std::string> warning;  // set when fewer candidates than n
};

// Candidates exceed tau in at least one category; n of them uniformly.
ThresholdSelection select_threshold(std::span<const std::string> pool,
                                    std::span<const CategoryScores> scores,
                                    const std::array<double, kNumCategories>& tau, std::size_t n,
                                    std::uint64_t seed);

// Ascending min over categories of |p - 0.5|; ties by id.
std::vector<std::string> select_uncertainty(std::span<const std::string> pool,
                                            std::span<const CategoryScores> scores, std::size_t n);

struct Candidate {
  std::string id;
  std::map<std::string, std::string> metadata;
};

// Buckets by metadata[key]; each item weighs 1/sqrt(bucket size), so a
// bucket's mass is sqrt(size). Draws n without replacement (uniform within
// a bucket). Throws InputError naming the first sample lacking the key.
SelectionBatch metadata_reweight(std::span<const Candidate> candidates, const std::string& key,
                                 std::size_t n, std::uint64_t seed);

// Label source for requested ids.
class Oracle {
 public:
  virtual ~Oracle() = default;
  // Throws OracleError on failure; must return a vector for every id.
  virtual std::map<std::string, LabelVector> label(std::span<const std::string> ids) = 0;
  virtual Role role() const { return Role::oracle; }
  virtual std::string name() const { return "oracle"; }
};

// Reads labels from held-out ground truth, optionally flipping each sample's
// label with probability `flip_rate` (undesired -> all negative, clean -> a
// random positive category).
class SimulatedAnnotator : public Oracle {
 public:
  SimulatedAnnotator(const Dataset& truth, double flip_rate = 0.0, std::uint64_t seed = 0,
                     Role role = Role::oracle, std::string name = "simulated");
  std::map<std::string, LabelVector> label(std::span<const std::string> ids) override;
  Role role() const override { return role_; }
  std::string name() const override { return name_; }

 private:
  const Dataset* truth_;
  double flip_rate_;
  std::mt19937_64 rng_;
  Role role_;
  std::string name_;
};

struct IterationConfig {
  std::size_t batch_size = 2000;
  std::string reweight_key;
  double reweight_oversample = 2.0;
  std::uint64_t seed = 0;
  std::int64_t timestamp = 0;
};

struct IterationResult {
  SelectionBatch batch;
  std::size_t labeled = 0;
};

// Builds a selection batch from precomputed pool scores. Shortfalls of the
// threshold and uncertainty pipelines are backfilled with random draws.
SelectionBatch select_batch(const Dataset& pool, std::span<const CategoryScores> scores,
                            const StrategyMix& mix, const IterationConfig& cfg);

// Scores the pool, selects, labels through the oracle and appends the newly
// labeled samples to `training`. If the oracle throws, `training` is left
// unchanged and the exception propagates.
IterationResult run_iteration(const Model& model, const Dataset& pool, const StrategyMix& mix,
                              const IterationConfig& cfg, Oracle& oracle, Dataset& training);

struct LoopResult {
  std::vector<EvalTable> evaluations;     // N + 1 rows
  std::vector<SelectionBatch> batches;    // N
  std::vector<std::string> checkpoints;   // ids, N + 1
  std::vector<std::filesystem::path> checkpoint_paths;  // when out_dir is set
  Dataset final_training;
};

nlohmann::json to_json(const LoopResult& r);

struct LoopInputs {
  const Dataset* initial = nullptr;
  const Dataset* pool_source = nullptr;
  const Dataset* validation = nullptr;
  // Per-iteration mix override (index = iteration); falls back to `mix`.
  StrategyMix mix;
  std::vector<StrategyMix> schedule;
  std::optional<std::filesystem::path> out_dir;
};

// for i in 0..N-1: train M_i on D_i, evaluate on V, draw a pool of pool_size
// unseen samples, select ~batch_size, label, D_{i+1} = D_i + labeled. Then
// trains and evaluates M_N.
LoopResult run_loop(const LoopInputs& inputs, const LoopConfig& loop, const ModelSpec& spec,
                    const TrainConfig& train_cfg, Oracle& oracle);

}  // namespace modpipe
