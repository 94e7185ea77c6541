#include "modpipe/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "modpipe/evalx.hpp"
#include "seeding.hpp"

namespace modpipe {
namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

std::string_view to_string(TrainMode m) { return m == TrainMode::wdat ? "wdat" : "supervised"; }

TrainMode parse_mode(const std::string& s) {
  if (s == "supervised") return TrainMode::supervised;
  if (s == "wdat") return TrainMode::wdat;
  throw InputError("unknown training mode: " + s);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingError(std::string("non-finite ") + what);
}

double batch_classification_loss(const BatchTrace& trace, std::span<const LabelVector> targets) {
  double sum = 0.0;
  for (std::size_t s = 0; s < trace.size(); ++s) {
    sum += classification_loss_from_logits(trace.samples[s].logits, targets[s]);
  }
  return sum / static_cast<double>(trace.size());
}

double trace_critic_loss(const BatchTrace& source, const BatchTrace& target) {
  std::vector<double> a, b;
  for (const auto& t : source.samples) a.push_back(t.critic_out);
  for (const auto& t : target.samples) b.push_back(t.critic_out);
  return critic_loss(a, b);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning rate must be positive");
  }
  if (batch_size == 0) throw InputError("batch size must be >= 1");
  if (max_epochs == 0) throw InputError("max epochs must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be >= 0");
  if (!(clip_bound > 0.0)) throw InputError("clip bound must be positive");
  if (critic_steps == 0) throw InputError("critic steps must be >= 1");
  if (critic_learning_rate && !(*critic_learning_rate > 0.0)) {
    throw InputError("critic learning rate must be positive");
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j = {{"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
                      {"max_epochs", cfg.max_epochs},       {"lambda", cfg.lambda},
                      {"clip_bound", cfg.clip_bound},       {"critic_steps", cfg.critic_steps},
                      {"seed", cfg.seed},                   {"mode", to_string(cfg.mode)}};
  if (cfg.critic_learning_rate) j["critic_learning_rate"] = *cfg.critic_learning_rate;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.clip_bound = j.value("clip_bound", cfg.clip_bound);
  cfg.critic_steps = j.value("critic_steps", cfg.critic_steps);
  if (j.contains("critic_learning_rate") && !j["critic_learning_rate"].is_null()) {
    cfg.critic_learning_rate = j["critic_learning_rate"].get<double>();
  }
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("mode")) cfg.mode = parse_mode(j["mode"].get<std::string>());
  cfg.validate();
  return cfg;
}

double classification_loss(std::span<const double> probabilities, const LabelVector& target) {
  if (probabilities.size() != kNumCategories) throw DimensionError("expected 8 probabilities");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    const auto c = kAllCategories[k];
    if (!target.is_labeled(c)) continue;
    const double p = std::clamp(probabilities[k], kLossClamp, 1.0 - kLossClamp);
    sum += target.is_positive(c) ? -std::log(p) : -std::log1p(-p);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double classification_loss_from_logits(std::span<const double> logits, const LabelVector& target) {
  if (logits.size() != kNumCategories) throw DimensionError("expected 8 logits");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    const auto c = kAllCategories[k];
    if (!target.is_labeled(c)) continue;
    const double y = target.is_positive(c) ? 1.0 : 0.0;
    sum += softplus(logits[k]) - y * logits[k];
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double critic_loss(std::span<const double> source_outputs, std::span<const double> target_outputs) {
  if (source_outputs.empty() || target_outputs.empty()) {
    throw InputError("critic loss needs non-empty source and target batches");
  }
  double ms = 0.0, mt = 0.0;
  for (double v : source_outputs) ms += v;
  for (double v : target_outputs) mt += v;
  return std::abs(ms / static_cast<double>(source_outputs.size()) -
                  mt / static_cast<double>(target_outputs.size()));
}

double critic_loss(std::span<const SparseVector* const> source,
                   std::span<const SparseVector* const> target, const Network& net) {
  if (source.empty() || target.empty()) {
    throw InputError("critic loss needs non-empty source and target batches");
  }
  std::vector<double> a, b;
  for (const auto* x : source) a.push_back(net.critic_forward(net.encode(*x)));
  for (const auto* x : target) b.push_back(net.critic_forward(net.encode(*x)));
  return critic_loss(a, b);
}

nlohmann::json to_json(const LossReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json row = {{"epoch", e.epoch},
                          {"classification", e.classification},
                          {"domain", e.domain},
                          {"objective", e.objective}};
    row["validation_auprc"] = e.validation_auprc ? nlohmann::json(*e.validation_auprc) : nlohmann::json(nullptr);
    epochs.push_back(row);
  }
  return {{"epochs", epochs}, {"best_epoch", r.best_epoch}, {"steps", r.steps.size()}};
}

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(&model), cfg_(std::move(cfg)), dropout_rng_(detail::derive_seed(cfg_.seed, "dropout")) {
  cfg_.validate();
}

StepReport Trainer::supervised_step(std::span<const Example* const> batch) {
  if (batch.empty()) throw InputError("empty batch");
  auto& net = model_->network();
  std::vector<const SparseVector*> xs;
  std::vector<LabelVector> ys;
  std::vector<DropoutMask> masks;
  for (const auto* e : batch) {
    xs.push_back(&e->features);
    ys.push_back(e->target);
    if (net.config().dropout > 0.0) masks.push_back(net.draw_dropout_mask(dropout_rng_));
  }
  ForwardOptions opts;
  opts.masks = masks;
  const auto trace = net.forward(xs, opts);
  StepReport r;
  r.classification = batch_classification_loss(trace, ys);
  require_finite(r.classification, "classification loss");
  r.objective = r.classification;
  const auto grad = net.classifier_gradient(trace, ys, nullptr, 0.0);
  net.apply_descent(grad, cfg_.learning_rate);
  r.max_abs_critic = net.params().max_abs_critic();
  return r;
}

StepReport Trainer::wdat_step(std::span<const Example* const> source,
                              std::span<const SparseVector* const> target) {
  if (source.empty() || target.empty()) throw InputError("empty batch");
  auto& net = model_->network();
  std::vector<const SparseVector*> xs;
  std::vector<LabelVector> ys;
  for (const auto* e : source) {
    xs.push_back(&e->features);
    ys.push_back(e->target);
  }

  // Critic ascent on L_d; the encoder is fixed, so embeddings are reused.
  ForwardOptions critic_only;
  critic_only.heads = false;
  critic_only.critic = true;
  auto src_emb = net.forward(xs, critic_only);
  auto tgt_trace = net.forward(target, critic_only);
  for (std::size_t i = 0; i < cfg_.critic_steps; ++i) {
    if (i > 0) {
      net.refresh_critic(src_emb);
      net.refresh_critic(tgt_trace);
    }
    require_finite(trace_critic_loss(src_emb, tgt_trace), "critic loss");
    const auto g = net.critic_gradient(src_emb, tgt_trace);
    net.apply_critic_ascent(g, cfg_.critic_rate(), cfg_.clip_bound);
  }
  net.refresh_critic(tgt_trace);

  // Classifier descent on L_c + lambda * L_d with the critic frozen.
  std::vector<DropoutMask> masks;
  if (net.config().dropout > 0.0) {
    for (std::size_t s = 0; s < xs.size(); ++s) masks.push_back(net.draw_dropout_mask(dropout_rng_));
  }
  ForwardOptions full;
  full.critic = true;
  full.masks = masks;
  const auto trace = net.forward(xs, full);
  StepReport r;
  r.classification = batch_classification_loss(trace, ys);
  r.domain = trace_critic_loss(trace, tgt_trace);
  r.objective = r.classification + cfg_.lambda * r.domain;
  require_finite(r.objective, "objective");
  const auto grad = net.classifier_gradient(trace, ys, &tgt_trace, cfg_.lambda);
  net.apply_descent(grad, cfg_.learning_rate);
  r.max_abs_critic = net.params().max_abs_critic();
  return r;
}

TrainResult train(const TrainData& data, const ModelSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  if (data.labeled == nullptr) throw InputError("no labeled dataset");
  Model model(spec);
  const auto& fcfg = model.featurizer_config();

  std::vector<Example> examples;
  for (const auto& s : *data.labeled) {
    if (!s.consolidated || s.consolidated->labeled_count() == 0) continue;
    examples.push_back({featurize(s.text, fcfg), *s.consolidated});
  }
  if (examples.empty()) throw InputError("training set has no labeled samples");

  std::vector<SparseVector> pool;
  if (cfg.mode == TrainMode::wdat) {
    if (data.target_pool == nullptr || data.target_pool->empty()) {
      throw InputError("wdat training needs a non-empty target pool");
    }
    pool.reserve(data.target_pool->size());
    for (const auto& s : *data.target_pool) pool.push_back(featurize(s.text, fcfg));
  }

  Trainer trainer(model, cfg);
  std::mt19937_64 shuffle_rng(detail::derive_seed(cfg.seed, "shuffle"));
  std::mt19937_64 target_rng(detail::derive_seed(cfg.seed, "target"));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{model, {}};
  std::optional<double> best_score;
  std::optional<NetworkParams> best_params;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss el;
    el.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Example*> batch;
      for (auto i = start; i < end; ++i) batch.push_back(&examples[order[i]]);
      StepReport r;
      if (cfg.mode == TrainMode::wdat) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        std::vector<const SparseVector*> target;
        for (std::size_t i = 0; i < batch.size(); ++i) target.push_back(&pool[pick(target_rng)]);
        r = trainer.wdat_step(batch, target);
      } else {
        r = trainer.supervised_step(batch);
      }
      el.classification += r.classification;
      el.domain += r.domain;
      el.objective += r.objective;
      ++steps;
      result.report.steps.push_back(r);
    }
    el.classification /= static_cast<double>(steps);
    el.domain /= static_cast<double>(steps);
    el.objective /= static_cast<double>(steps);
    if (data.validation != nullptr && !data.validation->empty()) {
      el.validation_auprc = evaluate(model, *data.validation).mean_auprc();
      if (el.validation_auprc && (!best_score || *el.validation_auprc > *best_score)) {
        best_score = el.validation_auprc;
        best_params = model.network().params();
        result.report.best_epoch = epoch;
      }
    }
    result.report.epochs.push_back(el);
  }

  if (best_params) {
    result.model = Model(fcfg, Network(model.network().config(), std::move(*best_params)));
  } else {
    result.report.best_epoch = cfg.max_epochs - 1;
    result.model = std::move(model);
  }
  return result;
}

}  // namespace modpipe
