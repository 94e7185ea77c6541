#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/corpus.hpp"
#include "modpipe/model.hpp"

namespace modpipe {

enum class TrainMode { supervised, wdat };

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 3;
  double lambda = 0.01;
  double clip_bound = 0.01;
  std::size_t critic_steps = 1;
  // Critic ascent rate; unset means learning_rate.
  std::optional<double> critic_learning_rate;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::supervised;

  void validate() const;
  double critic_rate() const { return critic_learning_rate.value_or(learning_rate); }
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Lower clamp used by classification_loss.
inline constexpr double kLossClamp = 1e-7;

// L_c for one sample: mean binary cross-entropy over the labeled categories,
// probabilities clamped into [1e-7, 1 - 1e-7]. All-unlabeled targets give 0.
double classification_loss(std::span<const double> probabilities, const LabelVector& target);
// Same loss from logits in the overflow-free form softplus(z) - y z.
double classification_loss_from_logits(std::span<const double> logits, const LabelVector& target);

// L_d = |mean_source f_d(f_z(x)) - mean_target f_d(f_z(x))|. Throws InputError
// on an empty batch.
double critic_loss(std::span<const SparseVector* const> source,
                   std::span<const SparseVector* const> target, const Network& net);
// L_d from critic outputs already computed.
double critic_loss(std::span<const double> source_outputs, std::span<const double> target_outputs);

struct Example {
  SparseVector features;
  LabelVector target;
};

struct StepReport {
  double classification = 0.0;  // L_c on the batch before the update
  double domain = 0.0;          // L_d seen by the classifier step
  double objective = 0.0;       // L_c + lambda * L_d
  float max_abs_critic = 0.0f;  // after the critic updates of this step
};

struct EpochLoss {
  std::size_t epoch = 0;
  double classification = 0.0;
  double domain = 0.0;
  double objective = 0.0;
  std::optional<double> validation_auprc;  // mean over defined categories
};

struct LossReport {
  std::vector<EpochLoss> epochs;
  std::vector<StepReport> steps;
  std::size_t best_epoch = 0;
};

nlohmann::json to_json(const LossReport& r);

// Single-threaded step driver over a model it does not own. Dropout masks
// and target-batch draws use separate seeded streams, so a wdat run with
// lambda = 0 follows the supervised parameter trajectory bit-for-bit.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  StepReport supervised_step(std::span<const Example* const> batch);
  // critic_steps ascents on L_d with clipping, then one descent on
  // L_c + lambda * L_d with the critic frozen. Throws TrainingError on a
  // non-finite loss.
  StepReport wdat_step(std::span<const Example* const> source,
                       std::span<const SparseVector* const> target);

  const TrainConfig& config() const noexcept { return cfg_; }

 private:
  Model* model_;
  TrainConfig cfg_;
  std::mt19937_64 dropout_rng_;
};

struct TrainData {
  const Dataset* labeled = nullptr;
  // Unlabeled target-domain pool; required in wdat mode.
  const Dataset* target_pool = nullptr;
  const Dataset* validation = nullptr;
};

struct TrainResult {
  Model model;
  LossReport report;
};

// Trains on samples with consolidated labels. Minibatches come from a seeded
// shuffle each epoch; with a validation set the best epoch by mean AUPRC is
// returned, else the final one. Throws InputError on an empty labeled set or
// wdat without a target pool; TrainingError on non-finite losses.
TrainResult train(const TrainData& data, const ModelSpec& spec, const TrainConfig& cfg);

}  // namespace modpipe
