#include "modpipe/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "modpipe/error.hpp"
#include "seeding.hpp"

namespace modpipe {
namespace {

DenseLayer make_layer(std::uint32_t in, std::uint32_t out, double limit, double bias_limit,
                      std::mt19937_64& rng) {
  DenseLayer layer;
  layer.in = in;
  layer.out = out;
  layer.weight.resize(static_cast<std::size_t>(in) * out);
  layer.bias.assign(out, 0.0f);
  std::uniform_real_distribution<double> w(-limit, limit);
  for (auto& v : layer.weight) v = static_cast<float>(w(rng));
  if (bias_limit > 0.0) {
    std::uniform_real_distribution<double> b(-bias_limit, bias_limit);
    for (auto& v : layer.bias) v = static_cast<float>(b(rng));
  }
  return layer;
}

double glorot(std::uint32_t in, std::uint32_t out) {
  return std::sqrt(6.0 / static_cast<double>(in + out));
}

// out[j] += scale * w[j] for j < n.
inline void axpy(double scale, const float* w, double* out, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] += scale * static_cast<double>(w[j]);
}

inline void axpy(double scale, const double* w, double* out, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] += scale * w[j];
}

// Layer forward: out = b + sum_i x_i W[i], skipping zero inputs.
void dense_forward(const DenseLayer& layer, std::span<const double> x, std::vector<double>& out) {
  out.assign(layer.bias.begin(), layer.bias.end());
  for (std::uint32_t i = 0; i < layer.in; ++i) {
    if (x[i] == 0.0) continue;
    axpy(x[i], layer.weight.data() + static_cast<std::size_t>(i) * layer.out, out.data(),
         layer.out);
  }
}

void relu_inplace(std::vector<double>& v) {
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

void check_dim(const SparseVector& x, std::uint32_t dim) {
  if (x.dimensionality != dim) {
    throw DimensionError("input dimensionality " + std::to_string(x.dimensionality) +
                         " does not match network input " + std::to_string(dim));
  }
  if (!x.indices.empty() && x.indices.back() >= dim) {
    throw DimensionError("feature index out of range");
  }
}

DenseGradient zero_grad(const DenseLayer& layer) {
  return {std::vector<double>(layer.weight.size(), 0.0), std::vector<double>(layer.bias.size(), 0.0)};
}

double sign_of(double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }

// Backpropagates upstream gradient `g` (scalar, critic output) through the
// critic for one sample. Accumulates parameter grads when `grads` is set and
// returns dL/dh when `want_input`.
std::vector<double> critic_backward(const std::vector<DenseLayer>& layers, const SampleTrace& t,
                                    double g, CriticGradient* grads, bool want_input) {
  const std::size_t L = layers.size();
  // Activations feeding each layer.
  std::vector<std::vector<double>> acts(L);
  acts[0] = t.embedding;
  for (std::size_t l = 1; l < L; ++l) {
    acts[l] = t.critic_pre[l - 1];
    relu_inplace(acts[l]);
  }
  std::vector<double> dz = {g};
  std::vector<double> dx;
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = layers[l];
    const auto& a = acts[l];
    if (grads != nullptr) {
      auto& gw = grads->layers[l];
      for (std::uint32_t i = 0; i < layer.in; ++i) {
        if (a[i] == 0.0) continue;
        axpy(a[i], dz.data(), gw.weight.data() + static_cast<std::size_t>(i) * layer.out,
             layer.out);
      }
      for (std::uint32_t j = 0; j < layer.out; ++j) gw.bias[j] += dz[j];
    }
    if (l == 0 && !want_input) break;
    dx.assign(layer.in, 0.0);
    for (std::uint32_t i = 0; i < layer.in; ++i) {
      if (l > 0 && t.critic_pre[l - 1][i] <= 0.0) continue;
      const float* w = layer.weight.data() + static_cast<std::size_t>(i) * layer.out;
      double s = 0.0;
      for (std::uint32_t j = 0; j < layer.out; ++j) s += static_cast<double>(w[j]) * dz[j];
      dx[i] = s;
    }
    dz.swap(dx);
  }
  if (!want_input) return {};
  return dz;
}

}  // namespace

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double probability(double logit) noexcept {
  return std::clamp(sigmoid(logit), kProbFloor, 1.0 - kProbFloor);
}

void NetworkConfig::validate() const {
  if (input_dim == 0 || d_model == 0) throw InputError("network widths must be >= 1");
  for (auto w : critic_hidden) {
    if (w == 0) throw InputError("critic hidden widths must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("dropout must lie in [0, 1)");
  if (!(encoder_init > 0.0 && std::isfinite(encoder_init))) {
    throw InputError("encoder_init must be positive");
  }
}

nlohmann::json to_json(const NetworkConfig& cfg) {
  return {{"input_dim", cfg.input_dim},   {"d_model", cfg.d_model},
          {"head_hidden", kHeadHidden},   {"dropout", cfg.dropout},
          {"critic_hidden", cfg.critic_hidden}, {"encoder_init", cfg.encoder_init},
          {"seed", cfg.seed}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.input_dim = j.value("input_dim", cfg.input_dim);
  cfg.d_model = j.value("d_model", cfg.d_model);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.critic_hidden = j.value("critic_hidden", cfg.critic_hidden);
  cfg.encoder_init = j.value("encoder_init", cfg.encoder_init);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("head_hidden") && j["head_hidden"].get<std::uint32_t>() != kHeadHidden) {
    throw InputError("head hidden width is fixed at 256");
  }
  cfg.validate();
  return cfg;
}

float NetworkParams::max_abs_critic() const noexcept {
  float m = 0.0f;
  for (const auto& layer : critic) {
    for (float v : layer.weight) m = std::max(m, std::abs(v));
    for (float v : layer.bias) m = std::max(m, std::abs(v));
  }
  return m;
}

bool NetworkParams::all_finite() const noexcept {
  auto finite = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
  };
  if (!finite(encoder_weight) || !finite(encoder_bias)) return false;
  for (const auto& h : heads) {
    if (!finite(h.hidden.weight) || !finite(h.hidden.bias) || !finite(h.output.weight) ||
        !finite(h.output.bias)) {
      return false;
    }
  }
  for (const auto& l : critic) {
    if (!finite(l.weight) || !finite(l.bias)) return false;
  }
  return true;
}

double EncoderGradient::weight(std::uint32_t row, std::uint32_t unit) const {
  double g = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& x = inputs[i];
    auto it = std::lower_bound(x.indices.begin(), x.indices.end(), row);
    if (it == x.indices.end() || *it != row) continue;
    const auto k = static_cast<std::size_t>(it - x.indices.begin());
    g += x.values[k] * deltas[i * d_model + unit];
  }
  return g;
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto d = cfg_.d_model;
  std::mt19937_64 enc_rng(detail::derive_seed(cfg_.seed, "encoder"));
  std::uniform_real_distribution<double> enc(-cfg_.encoder_init, cfg_.encoder_init);
  params_.encoder_weight.resize(static_cast<std::size_t>(cfg_.input_dim) * d);
  for (auto& v : params_.encoder_weight) v = static_cast<float>(enc(enc_rng));
  params_.encoder_bias.assign(d, 0.0f);

  std::mt19937_64 head_rng(detail::derive_seed(cfg_.seed, "heads"));
  for (auto& h : params_.heads) {
    h.hidden = make_layer(d, kHeadHidden, glorot(d, kHeadHidden), 0.0, head_rng);
    h.output = make_layer(kHeadHidden, 1, glorot(kHeadHidden, 1), 0.0, head_rng);
  }

  std::mt19937_64 critic_rng(detail::derive_seed(cfg_.seed, "critic"));
  std::uint32_t in = d;
  for (auto w : cfg_.critic_hidden) {
    params_.critic.push_back(make_layer(in, w, 0.01, 0.0, critic_rng));
    in = w;
  }
  params_.critic.push_back(make_layer(in, 1, 0.01, 0.0, critic_rng));
}

Network::Network(NetworkConfig cfg, NetworkParams params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const auto d = cfg_.d_model;
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw DimensionError("parameter shape mismatch: " + what);
  };
  auto check_layer = [&](const DenseLayer& l, std::uint32_t in, std::uint32_t out,
                         const std::string& what) {
    expect(l.in == in && l.out == out && l.weight.size() == static_cast<std::size_t>(in) * out &&
               l.bias.size() == out,
           what);
  };
  expect(params_.encoder_weight.size() == static_cast<std::size_t>(cfg_.input_dim) * d,
         "encoder weight");
  expect(params_.encoder_bias.size() == d, "encoder bias");
  for (const auto& h : params_.heads) {
    check_layer(h.hidden, d, kHeadHidden, "head hidden");
    check_layer(h.output, kHeadHidden, 1, "head output");
  }
  expect(params_.critic.size() == cfg_.critic_hidden.size() + 1, "critic depth");
  std::uint32_t in = d;
  for (std::size_t l = 0; l < cfg_.critic_hidden.size(); ++l) {
    check_layer(params_.critic[l], in, cfg_.critic_hidden[l], "critic layer");
    in = cfg_.critic_hidden[l];
  }
  check_layer(params_.critic.back(), in, 1, "critic output");
}

std::vector<double> Network::encoder_preactivation(const SparseVector& x) const {
  check_dim(x, cfg_.input_dim);
  const auto d = cfg_.d_model;
  std::vector<double> pre(params_.encoder_bias.begin(), params_.encoder_bias.end());
  for (std::size_t k = 0; k < x.indices.size(); ++k) {
    axpy(x.values[k], params_.encoder_weight.data() + static_cast<std::size_t>(x.indices[k]) * d,
         pre.data(), d);
  }
  return pre;
}

std::vector<double> Network::encode(const SparseVector& x) const {
  auto h = encoder_preactivation(x);
  relu_inplace(h);
  return h;
}

std::array<double, kNumCategories> Network::head_logits(std::span<const double> h,
                                                        const DropoutMask* mask) const {
  if (h.size() != cfg_.d_model) throw DimensionError("embedding size mismatch");
  const bool drop = mask != nullptr && !mask->empty();
  const double scale = drop ? 1.0 / (1.0 - cfg_.dropout) : 1.0;
  std::array<double, kNumCategories> logits{};
  std::vector<double> z;
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    const auto& head = params_.heads[k];
    dense_forward(head.hidden, h, z);
    double logit = head.output.bias[0];
    for (std::uint32_t j = 0; j < kHeadHidden; ++j) {
      double a = z[j] > 0.0 ? z[j] : 0.0;
      if (drop) a = mask->keep[k * kHeadHidden + j] ? a * scale : 0.0;
      logit += static_cast<double>(head.output.weight[j]) * a;
    }
    logits[k] = logit;
  }
  return logits;
}

std::array<double, kNumCategories> Network::heads_forward(std::span<const double> h,
                                                          const DropoutMask* mask) const {
  auto out = head_logits(h, mask);
  for (auto& v : out) v = probability(v);
  return out;
}

double Network::critic_forward(std::span<const double> h) const {
  if (h.size() != cfg_.d_model) throw DimensionError("embedding size mismatch");
  std::vector<double> a(h.begin(), h.end());
  std::vector<double> z;
  for (std::size_t l = 0; l < params_.critic.size(); ++l) {
    dense_forward(params_.critic[l], a, z);
    if (l + 1 < params_.critic.size()) relu_inplace(z);
    a.swap(z);
  }
  return a[0];
}

DropoutMask Network::draw_dropout_mask(std::mt19937_64& rng) const {
  DropoutMask m;
  m.keep.resize(kNumCategories * kHeadHidden);
  std::bernoulli_distribution keep(1.0 - cfg_.dropout);
  for (auto& k : m.keep) k = keep(rng) ? 1 : 0;
  return m;
}

BatchTrace Network::forward(std::span<const SparseVector* const> batch,
                            const ForwardOptions& opts) const {
  if (!opts.masks.empty() && opts.masks.size() != batch.size()) {
    throw DimensionError("dropout masks do not match batch size");
  }
  BatchTrace trace;
  trace.inputs.assign(batch.begin(), batch.end());
  trace.samples.resize(batch.size());
  trace.has_heads = opts.heads;
  const auto d = cfg_.d_model;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    auto& t = trace.samples[s];
    t.encoder_pre = encoder_preactivation(*batch[s]);
    t.embedding = t.encoder_pre;
    relu_inplace(t.embedding);
    if (opts.heads) {
      if (!opts.masks.empty()) t.mask = opts.masks[s];
      const bool drop = !t.mask.empty();
      const double scale = drop ? 1.0 / (1.0 - cfg_.dropout) : 1.0;
      t.head_pre.resize(kNumCategories * kHeadHidden);
      t.head_act.resize(kNumCategories * kHeadHidden);
      std::vector<double> z;
      for (std::size_t k = 0; k < kNumCategories; ++k) {
        const auto& head = params_.heads[k];
        dense_forward(head.hidden, t.embedding, z);
        double logit = head.output.bias[0];
        for (std::uint32_t j = 0; j < kHeadHidden; ++j) {
          const auto idx = k * kHeadHidden + j;
          t.head_pre[idx] = z[j];
          double a = z[j] > 0.0 ? z[j] : 0.0;
          if (drop) a = t.mask.keep[idx] ? a * scale : 0.0;
          t.head_act[idx] = a;
          logit += static_cast<double>(head.output.weight[j]) * a;
        }
        t.logits[k] = logit;
      }
    }
    (void)d;
  }
  if (opts.critic) refresh_critic(trace);
  return trace;
}

void Network::refresh_critic(BatchTrace& trace) const {
  const std::size_t L = params_.critic.size();
  for (auto& t : trace.samples) {
    t.critic_pre.assign(L, {});
    std::vector<double> a = t.embedding;
    for (std::size_t l = 0; l < L; ++l) {
      dense_forward(params_.critic[l], a, t.critic_pre[l]);
      a = t.critic_pre[l];
      if (l + 1 < L) relu_inplace(a);
    }
    t.critic_out = a[0];
  }
  trace.has_critic = true;
}

ClassifierGradient Network::classifier_gradient(const BatchTrace& source,
                                                std::span<const LabelVector> targets,
                                                const BatchTrace* target, double lambda) const {
  if (!source.has_heads) throw InputError("classifier gradient needs head forward values");
  if (targets.size() != source.size()) throw DimensionError("targets do not match batch size");
  if (source.size() == 0) throw InputError("empty batch");
  const bool domain_term = target != nullptr;
  if (domain_term && (!source.has_critic || !target->has_critic)) {
    throw InputError("domain term needs critic forward values on both batches");
  }
  if (domain_term && target->size() == 0) throw InputError("empty target batch");

  const auto d = cfg_.d_model;
  const double scale = 1.0 / (1.0 - cfg_.dropout);
  ClassifierGradient g;
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    g.heads[k].hidden = zero_grad(params_.heads[k].hidden);
    g.heads[k].output = zero_grad(params_.heads[k].output);
  }
  g.encoder.d_model = d;
  const std::size_t n_src = source.size();
  const std::size_t n_tgt = domain_term ? target->size() : 0;
  g.encoder.inputs.reserve(n_src + n_tgt);
  g.encoder.deltas.assign((n_src + n_tgt) * d, 0.0);
  g.encoder.bias.assign(d, 0.0);

  double sign = 0.0;
  if (domain_term) {
    double ms = 0.0, mt = 0.0;
    for (const auto& t : source.samples) ms += t.critic_out;
    for (const auto& t : target->samples) mt += t.critic_out;
    sign = sign_of(ms / static_cast<double>(n_src) - mt / static_cast<double>(n_tgt));
  }

  const double inv_batch = 1.0 / static_cast<double>(n_src);
  std::vector<double> dz(kHeadHidden);
  for (std::size_t s = 0; s < n_src; ++s) {
    const auto& t = source.samples[s];
    const auto& y = targets[s];
    double* dh = g.encoder.deltas.data() + s * d;
    const auto labeled = y.labeled_count();
    if (labeled > 0) {
      const double w = inv_batch / static_cast<double>(labeled);
      const bool drop = !t.mask.empty();
      for (std::size_t k = 0; k < kNumCategories; ++k) {
        const auto c = kAllCategories[k];
        if (!y.is_labeled(c)) continue;
        const double yk = y.is_positive(c) ? 1.0 : 0.0;
        const double gl = (sigmoid(t.logits[k]) - yk) * w;
        const auto& head = params_.heads[k];
        auto& hg = g.heads[k];
        hg.output.bias[0] += gl;
        for (std::uint32_t j = 0; j < kHeadHidden; ++j) {
          const auto idx = k * kHeadHidden + j;
          hg.output.weight[j] += gl * t.head_act[idx];
          double da = gl * static_cast<double>(head.output.weight[j]);
          if (drop) da = t.mask.keep[idx] ? da * scale : 0.0;
          dz[j] = t.head_pre[idx] > 0.0 ? da : 0.0;
          hg.hidden.bias[j] += dz[j];
        }
        for (std::uint32_t i = 0; i < d; ++i) {
          const double hi = t.embedding[i];
          if (hi == 0.0) continue;
          axpy(hi, dz.data(), hg.hidden.weight.data() + static_cast<std::size_t>(i) * kHeadHidden,
               kHeadHidden);
          if (t.encoder_pre[i] > 0.0) {
            const float* wrow = head.hidden.weight.data() + static_cast<std::size_t>(i) * kHeadHidden;
            double acc = 0.0;
            for (std::uint32_t j = 0; j < kHeadHidden; ++j) {
              acc += static_cast<double>(wrow[j]) * dz[j];
            }
            dh[i] += acc;
          }
        }
      }
    }
    if (domain_term) {
      const auto dc = critic_backward(params_.critic, t, sign / static_cast<double>(n_src),
                                      nullptr, true);
      for (std::uint32_t i = 0; i < d; ++i) dh[i] += lambda * dc[i];
    }
    for (std::uint32_t i = 0; i < d; ++i) {
      if (t.encoder_pre[i] <= 0.0) dh[i] = 0.0;
      g.encoder.bias[i] += dh[i];
    }
    g.encoder.inputs.push_back(*source.inputs[s]);
  }

  for (std::size_t s = 0; s < n_tgt; ++s) {
    const auto& t = target->samples[s];
    double* dh = g.encoder.deltas.data() + (n_src + s) * d;
    const auto dc = critic_backward(params_.critic, t, -sign / static_cast<double>(n_tgt),
                                    nullptr, true);
    for (std::uint32_t i = 0; i < d; ++i) {
      dh[i] = t.encoder_pre[i] > 0.0 ? lambda * dc[i] : 0.0;
      g.encoder.bias[i] += dh[i];
    }
    g.encoder.inputs.push_back(*target->inputs[s]);
  }
  return g;
}

CriticGradient Network::critic_gradient(const BatchTrace& source, const BatchTrace& target) const {
  if (!source.has_critic || !target.has_critic) {
    throw InputError("critic gradient needs critic forward values on both batches");
  }
  if (source.size() == 0 || target.size() == 0) throw InputError("empty batch");
  CriticGradient g;
  for (const auto& layer : params_.critic) g.layers.push_back(zero_grad(layer));
  double ms = 0.0, mt = 0.0;
  for (const auto& t : source.samples) ms += t.critic_out;
  for (const auto& t : target.samples) mt += t.critic_out;
  const double ns = static_cast<double>(source.size());
  const double nt = static_cast<double>(target.size());
  const double sign = sign_of(ms / ns - mt / nt);
  for (const auto& t : source.samples) critic_backward(params_.critic, t, sign / ns, &g, false);
  for (const auto& t : target.samples) critic_backward(params_.critic, t, -sign / nt, &g, false);
  return g;
}

GradientSet Network::backward(const BatchTrace& source, std::span<const LabelVector> targets,
                              const BatchTrace* target, GradientMode mode, double lambda) const {
  if (mode == GradientMode::classifier) {
    return classifier_gradient(source, targets, target, lambda);
  }
  if (target == nullptr) throw InputError("critic gradient needs a target batch");
  return critic_gradient(source, *target);
}

void Network::apply_descent(const ClassifierGradient& grad, double lr) {
  const auto d = cfg_.d_model;
  struct Entry {
    std::uint32_t row;
    std::uint32_t sample;
    double value;
  };
  std::vector<Entry> entries;
  for (std::size_t s = 0; s < grad.encoder.inputs.size(); ++s) {
    const auto& x = grad.encoder.inputs[s];
    for (std::size_t k = 0; k < x.indices.size(); ++k) {
      entries.push_back({x.indices[k], static_cast<std::uint32_t>(s), x.values[k]});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.sample < b.sample;
  });
  std::vector<double> acc(d);
  for (std::size_t e = 0; e < entries.size();) {
    const auto row = entries[e].row;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (; e < entries.size() && entries[e].row == row; ++e) {
      axpy(entries[e].value, grad.encoder.deltas.data() + static_cast<std::size_t>(entries[e].sample) * d,
           acc.data(), d);
    }
    float* w = params_.encoder_weight.data() + static_cast<std::size_t>(row) * d;
    for (std::uint32_t j = 0; j < d; ++j) {
      w[j] = static_cast<float>(static_cast<double>(w[j]) - lr * acc[j]);
    }
  }
  for (std::uint32_t j = 0; j < d; ++j) {
    params_.encoder_bias[j] =
        static_cast<float>(static_cast<double>(params_.encoder_bias[j]) - lr * grad.encoder.bias[j]);
  }
  auto step = [lr](std::vector<float>& p, const std::vector<double>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * g[i]);
    }
  };
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    step(params_.heads[k].hidden.weight, grad.heads[k].hidden.weight);
    step(params_.heads[k].hidden.bias, grad.heads[k].hidden.bias);
    step(params_.heads[k].output.weight, grad.heads[k].output.weight);
    step(params_.heads[k].output.bias, grad.heads[k].output.bias);
  }
}

void Network::apply_critic_ascent(const CriticGradient& grad, double lr, double clip_bound) {
  for (std::size_t l = 0; l < params_.critic.size(); ++l) {
    auto& layer = params_.critic[l];
    const auto& g = grad.layers[l];
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      layer.weight[i] = static_cast<float>(static_cast<double>(layer.weight[i]) + lr * g.weight[i]);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = static_cast<float>(static_cast<double>(layer.bias[i]) + lr * g.bias[i]);
    }
  }
  clip_critic(clip_bound);
}

void Network::clip_critic(double bound) {
  // Largest float not above `bound`, so the clipped value never exceeds it.
  float b = static_cast<float>(bound);
  if (static_cast<double>(b) > bound) b = std::nextafter(b, 0.0f);
  for (auto& layer : params_.critic) {
    for (auto& v : layer.weight) v = std::clamp(v, -b, b);
    for (auto& v : layer.bias) v = std::clamp(v, -b, b);
  }
}

}  // namespace modpipe
