#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "modpipe/features.hpp"
#include "modpipe/taxonomy.hpp"

namespace modpipe {

// Width of each per-category head's hidden layer.
inline constexpr std::uint32_t kHeadHidden = 256;

// Output probabilities are clamped into [kProbFloor, 1 - kProbFloor] so they
// stay strictly inside (0, 1) even for saturated logits.
inline constexpr double kProbFloor = 1e-15;

struct NetworkConfig {
  std::uint32_t input_dim = 1u << 18;
  std::uint32_t d_model = 256;
  double dropout = 0.1;
  std::vector<std::uint32_t> critic_hidden{300, 300};
  // Encoder weights start in U(-encoder_init, encoder_init). Small values keep
  // untrained hash rows from drowning the few informative ones.
  double encoder_init = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

// Fully connected layer; `weight` is input-major [in][out], so the forward
// pass accumulates one input row at a time and skips zero inputs.
struct DenseLayer {
  std::uint32_t in = 0;
  std::uint32_t out = 0;
  std::vector<float> weight;
  std::vector<float> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// One category head: d_model -> 256 (ReLU, dropout) -> 1.
struct HeadParams {
  DenseLayer hidden;
  DenseLayer output;

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

// encoder: embedding = ReLU(x^T W + b), W stored [input_dim][d_model]
// so a sparse input touches contiguous rows.
// heads: eight independent HeadParams.
// critic: d_model -> critic_hidden... (ReLU) -> 1 (linear).
struct NetworkParams {
  std::vector<float> encoder_weight;
  std::vector<float> encoder_bias;
  std::array<HeadParams, kNumCategories> heads;
  std::vector<DenseLayer> critic;

  float max_abs_critic() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// Inverted dropout keep-flags for one sample, [category][hidden unit].
// An empty mask means evaluation mode.
struct DropoutMask {
  std::vector<std::uint8_t> keep;
  bool empty() const noexcept { return keep.empty(); }
};

// Forward values of one sample, kept for backpropagation.
struct SampleTrace {
  std::vector<double> encoder_pre;
  std::vector<double> embedding;
  std::vector<double> head_pre;     // [category][kHeadHidden]
  std::vector<double> head_act;     // after ReLU and dropout scaling
  std::array<double, kNumCategories> logits{};
  std::vector<std::vector<double>> critic_pre;  // per layer, pre-activation
  double critic_out = 0.0;
  DropoutMask mask;
};

struct BatchTrace {
  std::vector<const SparseVector*> inputs;
  std::vector<SampleTrace> samples;
  bool has_heads = false;
  bool has_critic = false;

  std::size_t size() const noexcept { return samples.size(); }
};

struct ForwardOptions {
  bool heads = true;
  bool critic = false;
  // One mask per sample, or empty for evaluation mode.
  std::span<const DropoutMask> masks{};
};

// Gradient of the encoder weights in factored form: dW = sum_i x_i delta_i^T.
// Storing (x_i, delta_i) avoids materializing [rows x d_model] per batch.
struct EncoderGradient {
  std::uint32_t d_model = 0;
  std::vector<SparseVector> inputs;
  std::vector<double> deltas;  // [sample][d_model]
  std::vector<double> bias;

  double weight(std::uint32_t row, std::uint32_t unit) const;
};

struct DenseGradient {
  std::vector<double> weight;
  std::vector<double> bias;
};

struct HeadGradient {
  DenseGradient hidden;
  DenseGradient output;
};

struct ClassifierGradient {
  EncoderGradient encoder;
  std::array<HeadGradient, kNumCategories> heads;
};

struct CriticGradient {
  std::vector<DenseGradient> layers;
};

enum class GradientMode { classifier, critic };
using GradientSet = std::variant<ClassifierGradient, CriticGradient>;

class Network {
 public:
  // Seeded initialization. Critic parameters start inside [-0.01, 0.01].
  explicit Network(NetworkConfig cfg);
  // Throws DimensionError if `params` does not match `cfg`.
  Network(NetworkConfig cfg, NetworkParams params);

  const NetworkConfig& config() const noexcept { return cfg_; }
  const NetworkParams& params() const noexcept { return params_; }
  NetworkParams& mutable_params() noexcept { return params_; }

  // All take x with dimensionality == input_dim; DimensionError otherwise.
  std::vector<double> encoder_preactivation(const SparseVector& x) const;
  std::vector<double> encode(const SparseVector& x) const;

  // h must have d_model entries. Dropout applies only when `mask` is given.
  std::array<double, kNumCategories> head_logits(std::span<const double> h,
                                                 const DropoutMask* mask = nullptr) const;
  std::array<double, kNumCategories> heads_forward(std::span<const double> h,
                                                   const DropoutMask* mask = nullptr) const;
  double critic_forward(std::span<const double> h) const;

  DropoutMask draw_dropout_mask(std::mt19937_64& rng) const;

  BatchTrace forward(std::span<const SparseVector* const> batch, const ForwardOptions& opts) const;
  // Recomputes critic values of an existing trace (after a critic update).
  void refresh_critic(BatchTrace& trace) const;

  // Gradient w.r.t. (encoder, heads) of
  //   L_c(source) + lambda * L_d(source, target)
  // where L_c is the batch mean of per-sample masked BCE (each sample's mean
  // over its labeled categories) and L_d = |mean f_d(source) - mean f_d(target)|.
  // `target` may be null, in which case the L_d term is omitted.
  ClassifierGradient classifier_gradient(const BatchTrace& source,
                                         std::span<const LabelVector> targets,
                                         const BatchTrace* target, double lambda) const;
  // Gradient of L_d w.r.t. critic parameters.
  CriticGradient critic_gradient(const BatchTrace& source, const BatchTrace& target) const;

  // Dispatches on mode; throws InputError when the traces lack the forward
  // values the mode needs.
  GradientSet backward(const BatchTrace& source, std::span<const LabelVector> targets,
                       const BatchTrace* target, GradientMode mode, double lambda) const;

  // params -= lr * grad (encoder and heads).
  void apply_descent(const ClassifierGradient& grad, double lr);
  // critic += lr * grad, then every critic entry is clipped into [-bound, bound].
  void apply_critic_ascent(const CriticGradient& grad, double lr, double clip_bound);
  void clip_critic(double bound);

 private:
  NetworkConfig cfg_;
  NetworkParams params_;
};

double sigmoid(double z) noexcept;
// sigmoid clamped into [kProbFloor, 1 - kProbFloor].
double probability(double logit) noexcept;

}  // namespace modpipe
