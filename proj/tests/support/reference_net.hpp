#pragma once

// Double-precision reference of the network forward pass and training
// objective, written independently of the library's Network. Parameters are
// copied out as doubles so finite differences are not limited by float
// rounding. Per-sample intermediate values are cached so a perturbation only
// recomputes the part of the network it touches.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "modpipe/net.hpp"
#include "modpipe/taxonomy.hpp"

namespace reference {

struct Dense {
  std::size_t in = 0, out = 0;
  std::vector<double> w;  // [in][out]
  std::vector<double> b;
};

inline Dense copy(const modpipe::DenseLayer& l) {
  return {l.in, l.out, {l.weight.begin(), l.weight.end()}, {l.bias.begin(), l.bias.end()}};
}

struct Sample {
  std::vector<std::pair<std::size_t, double>> x;
  modpipe::LabelVector y;
  std::vector<unsigned char> keep;  // [cat][unit], empty: no dropout
};

class Net {
 public:
  Net(const modpipe::Network& net, double dropout)
      : d_(net.config().d_model), dropout_(dropout) {
    const auto& p = net.params();
    enc_w_.assign(p.encoder_weight.begin(), p.encoder_weight.end());
    enc_b_.assign(p.encoder_bias.begin(), p.encoder_bias.end());
    for (std::size_t k = 0; k < modpipe::kNumCategories; ++k) {
      hidden_[k] = copy(p.heads[k].hidden);
      output_[k] = copy(p.heads[k].output);
    }
    for (const auto& l : p.critic) critic_.push_back(copy(l));
  }

  // Parameter groups, addressable for perturbation.
  std::vector<double>& encoder_weight() { return enc_w_; }
  std::vector<double>& encoder_bias() { return enc_b_; }
  Dense& head_hidden(std::size_t k) { return hidden_[k]; }
  Dense& head_output(std::size_t k) { return output_[k]; }
  Dense& critic(std::size_t l) { return critic_[l]; }
  std::size_t critic_depth() const { return critic_.size(); }

  std::vector<double> embed(const Sample& s) const {
    std::vector<double> h(enc_b_);
    for (const auto& [row, v] : s.x) {
      for (std::size_t u = 0; u < d_; ++u) h[u] += v * enc_w_[row * d_ + u];
    }
    for (auto& v : h) v = std::max(v, 0.0);
    return h;
  }

  double logit(const std::vector<double>& h, const Sample& s, std::size_t k) const {
    const auto& hid = hidden_[k];
    const auto& out = output_[k];
    double z = out.b[0];
    for (std::size_t j = 0; j < hid.out; ++j) {
      double a = hid.b[j];
      for (std::size_t i = 0; i < hid.in; ++i) a += h[i] * hid.w[i * hid.out + j];
      a = std::max(a, 0.0);
      if (!s.keep.empty()) a = s.keep[k * hid.out + j] ? a / (1.0 - dropout_) : 0.0;
      z += a * out.w[j];
    }
    return z;
  }

  double critic_out(const std::vector<double>& h) const {
    std::vector<double> a = h;
    for (std::size_t l = 0; l < critic_.size(); ++l) {
      const auto& c = critic_[l];
      std::vector<double> next(c.b);
      for (std::size_t i = 0; i < c.in; ++i) {
        for (std::size_t j = 0; j < c.out; ++j) next[j] += a[i] * c.w[i * c.out + j];
      }
      if (l + 1 < critic_.size()) {
        for (auto& v : next) v = std::max(v, 0.0);
      }
      a = std::move(next);
    }
    return a[0];
  }

  static double bce_from_logit(double z, bool positive) {
    // softplus(z) - y z, evaluated without overflow
    const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return sp - (positive ? z : 0.0);
  }

  static double sample_loss(const std::vector<double>& logits, const modpipe::LabelVector& y) {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto c : modpipe::kAllCategories) {
      if (!y.is_labeled(c)) continue;
      sum += bce_from_logit(logits[modpipe::index_of(c)], y.is_positive(c));
      ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  }

  // Full objective L_c(source) + lambda * |mean f_d(source) - mean f_d(target)|.
  // With an empty target the domain term is dropped.
  double objective(const std::vector<Sample>& source, const std::vector<Sample>& target,
                   double lambda) const {
    double lc = 0.0;
    for (const auto& s : source) {
      const auto h = embed(s);
      std::vector<double> z(modpipe::kNumCategories);
      for (std::size_t k = 0; k < z.size(); ++k) z[k] = logit(h, s, k);
      lc += sample_loss(z, s.y);
    }
    lc /= static_cast<double>(source.size());
    if (target.empty()) return lc;
    return lc + lambda * domain_loss(source, target);
  }

  double domain_loss(const std::vector<Sample>& source, const std::vector<Sample>& target) const {
    double ms = 0.0, mt = 0.0;
    for (const auto& s : source) ms += critic_out(embed(s));
    for (const auto& t : target) mt += critic_out(embed(t));
    return std::abs(ms / static_cast<double>(source.size()) - mt / static_cast<double>(target.size()));
  }

  // Cached evaluation: embeddings, per-category logits and critic outputs.
  struct Cache {
    std::vector<std::vector<double>> hs, ht;
    std::vector<std::vector<double>> logits;  // source only
    std::vector<double> cs, ct;
  };

  Cache build_cache(const std::vector<Sample>& source, const std::vector<Sample>& target) const {
    Cache c;
    for (const auto& s : source) {
      c.hs.push_back(embed(s));
      std::vector<double> z(modpipe::kNumCategories);
      for (std::size_t k = 0; k < z.size(); ++k) z[k] = logit(c.hs.back(), s, k);
      c.logits.push_back(std::move(z));
      c.cs.push_back(critic_out(c.hs.back()));
    }
    for (const auto& t : target) {
      c.ht.push_back(embed(t));
      c.ct.push_back(critic_out(c.ht.back()));
    }
    return c;
  }

  static double objective_from(const Cache& c, const std::vector<Sample>& source, double lambda,
                               bool with_domain) {
    double lc = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) lc += sample_loss(c.logits[i], source[i].y);
    lc /= static_cast<double>(source.size());
    if (!with_domain) return lc;
    double ms = 0.0, mt = 0.0;
    for (double v : c.cs) ms += v;
    for (double v : c.ct) mt += v;
    return lc + lambda * std::abs(ms / static_cast<double>(c.cs.size()) -
                                  mt / static_cast<double>(c.ct.size()));
  }

  // Objective after changing only head k (other logits come from the cache).
  double objective_head_changed(const Cache& c, const std::vector<Sample>& source, std::size_t k,
                                double lambda, bool with_domain) const {
    Cache tmp = c;
    for (std::size_t i = 0; i < source.size(); ++i) tmp.logits[i][k] = logit(c.hs[i], source[i], k);
    return objective_from(tmp, source, lambda, with_domain);
  }

  // L_d after changing only the critic.
  double domain_critic_changed(const Cache& c) const {
    double ms = 0.0, mt = 0.0;
    for (const auto& h : c.hs) ms += critic_out(h);
    for (const auto& h : c.ht) mt += critic_out(h);
    return std::abs(ms / static_cast<double>(c.hs.size()) - mt / static_cast<double>(c.ht.size()));
  }

 private:
  std::size_t d_;
  double dropout_;
  std::vector<double> enc_w_, enc_b_;
  Dense hidden_[modpipe::kNumCategories];
  Dense output_[modpipe::kNumCategories];
  std::vector<Dense> critic_;
};

}  // namespace reference
