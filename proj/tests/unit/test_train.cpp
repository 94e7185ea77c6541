#include <chrono>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "modpipe/desk.hpp"
#include "modpipe/error.hpp"
#include "modpipe/evalx.hpp"
#include "modpipe/model.hpp"
#include "modpipe/train.hpp"

using namespace modpipe;

namespace {

LabelVector one(Category c, Label l) {
  LabelVector v;
  v.set(c, l);
  return v;
}

ModelSpec tiny_spec() {
  ModelSpec s;
  s.featurizer.dimensionality = 1u << 12;
  s.network.d_model = 8;
  s.network.critic_hidden = {6, 6};
  s.network.seed = 4;
  return s;
}

Dataset separable() {
  desk::Language lang(2);
  desk::CorpusSpec c;
  c.size = 200;
  c.event_rates[static_cast<std::size_t>(desk::Event::H1)] = 0.3;
  c.event_rates[static_cast<std::size_t>(desk::Event::V1)] = 0.3;
  c.keyword_variants = 1;
  c.seed = 5;
  return desk::generate(lang, c);
}

TrainConfig fast() {
  TrainConfig t;
  t.learning_rate = 4.0;
  t.batch_size = 16;
  t.max_epochs = 15;
  t.seed = 6;
  return t;
}

struct TwoDomain {
  Dataset source, target;
};

// Same label semantics, disjoint background vocabulary and different style
// tokens in the target.
TwoDomain two_domain() {
  desk::Language lang(5);
  desk::CorpusSpec s;
  s.size = 1500;
  s.event_rates = desk::uniform_rates(0.05);
  s.neutral_slice = {0.0, 0.5};
  s.style_tokens = 2;
  s.seed = 1;
  desk::CorpusSpec t = s;
  t.domain = Domain::target;
  t.id_prefix = "t";
  t.neutral_slice = {0.5, 1.0};
  t.seed = 2;
  return {desk::generate(lang, s), desk::generate(lang, t)};
}

// Distance estimate of a fixed encoder: a freshly initialized clipped critic
// ascends L_d on the full source and target sets.
double critic_probe(const Model& m, const Dataset& s, const Dataset& t) {
  Network probe(m.network().config());
  probe.mutable_params().encoder_weight = m.network().params().encoder_weight;
  probe.mutable_params().encoder_bias = m.network().params().encoder_bias;
  std::vector<SparseVector> xs, xt;
  for (const auto& x : s) xs.push_back(m.features(x.text));
  for (const auto& x : t) xt.push_back(m.features(x.text));
  std::vector<const SparseVector*> ps, pt;
  for (const auto& x : xs) ps.push_back(&x);
  for (const auto& x : xt) pt.push_back(&x);
  ForwardOptions o;
  o.heads = false;
  o.critic = true;
  auto ts = probe.forward(ps, o);
  auto tt = probe.forward(pt, o);
  for (int i = 0; i < 300; ++i) {
    probe.apply_critic_ascent(probe.critic_gradient(ts, tt), 1.0, 0.01);
    probe.refresh_critic(ts);
    probe.refresh_critic(tt);
  }
  std::vector<double> a, b;
  for (const auto& x : ts.samples) a.push_back(x.critic_out);
  for (const auto& x : tt.samples) b.push_back(x.critic_out);
  return critic_loss(a, b);
}

}  // namespace

TEST_CASE("classification loss") {
  std::array<double, kNumCategories> p;
  p.fill(0.5);
  CHECK(classification_loss(p, one(Category::S, Label::positive)) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-12));
  CHECK(classification_loss(p, LabelVector{}) == 0.0);

  p.fill(1.0);
  CHECK(classification_loss(p, LabelVector::all(Label::positive)) <= 1e-6);
  p.fill(0.0);
  CHECK(classification_loss(p, LabelVector::all(Label::negative)) <= 1e-6);
  CHECK(classification_loss(p, one(Category::H, Label::positive)) ==
        doctest::Approx(-std::log(kLossClamp)).epsilon(1e-12));

  p.fill(0.5);
  p[index_of(Category::S)] = 0.9;
  p[index_of(Category::V)] = 0.2;
  LabelVector two;
  two.set(Category::S, Label::positive);
  two.set(Category::V, Label::positive);
  const double a = -std::log(0.9), b = -std::log(0.2);
  CHECK(classification_loss(p, two) == doctest::Approx((a + b) / 2).epsilon(1e-12));
}

TEST_CASE("logit-form loss agrees with the probability form") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    std::array<double, kNumCategories> logits, probs;
    LabelVector y;
    for (auto c : kAllCategories) {
      logits[index_of(c)] = z(rng);
      probs[index_of(c)] = 1.0 / (1.0 + std::exp(-logits[index_of(c)]));
      y.set(c, static_cast<Label>(rng() % 3));
    }
    CHECK(classification_loss_from_logits(logits, y) ==
          doctest::Approx(classification_loss(probs, y)).epsilon(1e-9));
  }
}

TEST_CASE("critic loss from outputs") {
  const std::vector<double> s{0.2, 0.4}, t{0.1, 0.1};
  CHECK(critic_loss(s, t) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(critic_loss(t, s) == critic_loss(s, t));
  CHECK(critic_loss(s, s) == 0.0);
  CHECK_THROWS_AS(critic_loss(std::vector<double>{}, t), InputError);
}

TEST_CASE("critic loss over a network equals a per-sample recount") {
  NetworkConfig nc;
  nc.input_dim = 64;
  nc.d_model = 6;
  nc.critic_hidden = {5, 4};
  nc.seed = 9;
  Network net(nc);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (auto& l : net.mutable_params().critic) {
    for (auto& w : l.weight) w = static_cast<float>(u(rng));
  }
  std::vector<SparseVector> xs, xt;
  for (int i = 0; i < 30; ++i) {
    SparseVector x;
    x.dimensionality = 64;
    for (std::uint32_t k = 0; k < 64; k += 1 + static_cast<std::uint32_t>(rng() % 9)) {
      x.indices.push_back(k);
      x.values.push_back(static_cast<double>(rng() % 100) / 100.0);
    }
    (i % 2 ? xs : xt).push_back(x);
  }
  std::vector<const SparseVector*> ps, pt;
  double ms = 0.0, mt = 0.0;
  for (const auto& x : xs) {
    ps.push_back(&x);
    ms += net.critic_forward(net.encode(x));
  }
  for (const auto& x : xt) {
    pt.push_back(&x);
    mt += net.critic_forward(net.encode(x));
  }
  const double brute = std::abs(ms / xs.size() - mt / xt.size());
  CHECK(std::abs(critic_loss(ps, pt, net) - brute) <= 1e-12);
  CHECK(critic_loss(ps, ps, net) == 0.0);
  CHECK(critic_loss(pt, ps, net) == critic_loss(ps, pt, net));
}

TEST_CASE("tiny learning rate never increases L_c on a fixed batch") {
  auto spec = tiny_spec();
  spec.network.dropout = 0.0;
  Model m(spec);
  TrainConfig cfg;
  cfg.learning_rate = 1e-6;
  Trainer trainer(m, cfg);
  const auto d = separable();
  std::vector<Example> ex;
  for (std::size_t i = 0; i < 32; ++i) ex.push_back({m.features(d[i].text), *d[i].consolidated});
  std::vector<const Example*> batch;
  for (const auto& e : ex) batch.push_back(&e);
  double prev = trainer.supervised_step(batch).classification;
  for (int i = 0; i < 20; ++i) {
    const double now = trainer.supervised_step(batch).classification;
    CHECK(now <= prev + 1e-8);
    prev = now;
  }
}

TEST_CASE("separable toy reaches full training accuracy and AUPRC 1") {
  const auto d = separable();
  TrainData data;
  data.labeled = &d;
  const auto r = train(data, tiny_spec(), fast());
  std::size_t wrong = 0;
  for (const auto& s : d) {
    const auto p = r.model.score(s.text);
    for (auto c : kAllCategories) {
      if (s.consolidated->is_labeled(c) && (p[index_of(c)] >= 0.5) != s.consolidated->is_positive(c)) {
        ++wrong;
      }
    }
  }
  CHECK(wrong == 0);
  const auto table = evaluate(r.model, d);
  CHECK(table.row(Category::H).auprc == 1.0);
  CHECK(table.row(Category::V).auprc == 1.0);
  CHECK_FALSE(table.row(Category::SH).auprc.has_value());
  CHECK(r.report.epochs.size() == 15);
  CHECK(r.report.epochs.back().classification < r.report.epochs.front().classification);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto d = separable();
  TrainData data;
  data.labeled = &d;
  auto cfg = fast();
  cfg.max_epochs = 3;
  const auto a = serialize_checkpoint(train(data, tiny_spec(), cfg).model);
  const auto b = serialize_checkpoint(train(data, tiny_spec(), cfg).model);
  CHECK(a == b);
  cfg.seed = 99;
  CHECK(serialize_checkpoint(train(data, tiny_spec(), cfg).model) != a);
}

TEST_CASE("input errors") {
  const Dataset empty;
  const auto d = separable();
  TrainData data;
  CHECK_THROWS_AS(train(data, tiny_spec(), fast()), InputError);
  data.labeled = &empty;
  CHECK_THROWS_AS(train(data, tiny_spec(), fast()), InputError);
  data.labeled = &d;
  auto cfg = fast();
  cfg.mode = TrainMode::wdat;
  CHECK_THROWS_AS(train(data, tiny_spec(), cfg), InputError);
  cfg = fast();
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = fast();
  cfg.clip_bound = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  CHECK(train_config_from_json(to_json(fast())).seed == 6);
}

TEST_CASE("best-by-validation epoch is returned when a validation set is given") {
  const auto d = separable();
  TrainData data;
  data.labeled = &d;
  data.validation = &d;
  const auto r = train(data, tiny_spec(), fast());
  double best = -1.0;
  std::size_t at = 0;
  for (const auto& e : r.report.epochs) {
    REQUIRE(e.validation_auprc.has_value());
    if (*e.validation_auprc > best) {
      best = *e.validation_auprc;
      at = e.epoch;
    }
  }
  CHECK(r.report.best_epoch == at);
  CHECK(evaluate(r.model, d).mean_auprc() == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("wdat with lambda 0 follows the supervised trajectory bit for bit") {
  const auto dom = two_domain();
  TrainData data;
  data.labeled = &dom.source;
  data.target_pool = &dom.target;
  auto cfg = desk::train_config();
  cfg.max_epochs = 2;
  cfg.seed = 8;
  const auto sup = train(data, desk::model_spec(), cfg);
  cfg.mode = TrainMode::wdat;
  cfg.lambda = 0.0;
  const auto wd = train(data, desk::model_spec(), cfg);
  const auto& a = sup.model.network().params();
  const auto& b = wd.model.network().params();
  CHECK(a.encoder_weight == b.encoder_weight);
  CHECK(a.encoder_bias == b.encoder_bias);
  CHECK(a.heads == b.heads);
  CHECK_FALSE(a.critic == b.critic);
}

TEST_CASE("critic clipping holds after every wdat step") {
  const auto dom = two_domain();
  TrainData data;
  data.labeled = &dom.source;
  data.target_pool = &dom.target;
  auto cfg = desk::train_config();
  cfg.max_epochs = 2;
  cfg.mode = TrainMode::wdat;
  cfg.critic_steps = 3;
  cfg.critic_learning_rate = 50.0;
  const auto r = train(data, desk::model_spec(), cfg);
  REQUIRE_FALSE(r.report.steps.empty());
  for (const auto& s : r.report.steps) {
    CHECK(s.max_abs_critic <= 0.01f);
    CHECK(std::isfinite(s.objective));
    CHECK(s.objective == doctest::Approx(s.classification + cfg.lambda * s.domain).epsilon(1e-12));
  }
  CHECK(r.model.network().params().max_abs_critic() <= 0.01f);
}

// Reference run, seed 3, lambda 1: the clipped critic the model trains with
// keeps growing from its near-zero init, so its running L_d rises; the
// distance is measured instead by a fresh critic on the final encoders.
// Frozen values: supervised 2.906e-05, wdat 9.647e-06; final L_c 0.00310
// (supervised) vs 0.00137 (wdat).
TEST_CASE("wdat lowers the domain distance while L_c stays at its supervised floor") {
  const auto dom = two_domain();
  TrainData data;
  data.labeled = &dom.source;
  data.target_pool = &dom.target;
  auto cfg = desk::train_config();
  cfg.seed = 3;
  cfg.lambda = 1.0;
  const auto sup = train(data, desk::model_spec(), cfg);
  cfg.mode = TrainMode::wdat;
  const auto wd = train(data, desk::model_spec(), cfg);

  const double d_sup = critic_probe(sup.model, dom.source, dom.target);
  const double d_wd = critic_probe(wd.model, dom.source, dom.target);
  MESSAGE("probe distance supervised " << d_sup << " wdat " << d_wd);
  CHECK(d_sup == doctest::Approx(2.906e-05).epsilon(1e-3));
  CHECK(d_wd == doctest::Approx(9.647e-06).epsilon(1e-3));
  CHECK(d_wd < 0.5 * d_sup);

  const double floor = sup.report.epochs.back().classification;
  const double lc = wd.report.epochs.back().classification;
  CHECK(lc <= 1.1 * floor);
}

TEST_CASE("desk corpus of ~90k tokens trains for 3 epochs well inside 5 minutes") {
  desk::Language lang(3);
  desk::CorpusSpec c;
  c.size = 9000;
  c.event_rates = desk::rare_rates();
  c.seed = 4;
  const auto d = desk::generate(lang, c);
  std::size_t tokens = 0;
  for (const auto& s : d) {
    tokens += 1;
    for (char ch : s.text) tokens += ch == ' ' ? 1 : 0;
  }
  CHECK(tokens >= 90000);
  TrainData data;
  data.labeled = &d;
  auto cfg = desk::train_config();
  cfg.max_epochs = 3;
  const auto t0 = std::chrono::steady_clock::now();
  train(data, desk::model_spec(), cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("3 epochs over " << tokens << " tokens: " << secs << " s");
  CHECK(secs < 300.0);
}
