#include "modpipe/desk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "modpipe/error.hpp"
#include "modpipe/select.hpp"
#include "seeding.hpp"

namespace modpipe::desk {
namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::array<std::string_view, 8> kSuffixes = {"", "a", "o", "er", "ix", "us", "en", "ish"};
constexpr std::array<std::string_view, kNumEvents> kEventNames = {"S1", "S3", "H1", "H2",
                                                                    "V1", "V2", "HR", "SH"};

std::string syllables(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> c(0, kConsonants.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, kVowels.size() - 1);
  std::string w;
  for (std::size_t i = 0; i < n; ++i) {
    w.push_back(kConsonants[c(rng)]);
    w.push_back(kVowels[v(rng)]);
  }
  return w;
}

// Draws a word of `n` syllables not yet in `used`.
std::string fresh_word(std::mt19937_64& rng, std::size_t n, std::set<std::string>& used) {
  for (;;) {
    auto w = syllables(rng, n);
    if (w != kPlantedKeyword && used.insert(w).second) return w;
  }
}

std::string pad_index(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return buf;
}

}  // namespace

LabelVector labels_for(Event e) {
  auto v = clean_labels();
  switch (e) {
    case Event::S1: v.set(Category::S, Label::positive); break;
    case Event::S3:
      v.set(Category::S, Label::positive);
      v.set(Category::S3, Label::positive);
      break;
    case Event::H1: v.set(Category::H, Label::positive); break;
    case Event::H2:
      v.set(Category::H, Label::positive);
      v.set(Category::H2, Label::positive);
      break;
    case Event::V1: v.set(Category::V, Label::positive); break;
    case Event::V2:
      v.set(Category::V, Label::positive);
      v.set(Category::V2, Label::positive);
      break;
    case Event::HR: v.set(Category::HR, Label::positive); break;
    case Event::SH: v.set(Category::SH, Label::positive); break;
  }
  return v;
}

LabelVector clean_labels() { return LabelVector::all(Label::negative); }

Language::Language(std::uint64_t seed, std::size_t neutral_words, std::size_t stems_per_event,
                   std::size_t variants_per_stem) {
  if (variants_per_stem == 0 || variants_per_stem > kSuffixes.size()) {
    throw InputError("variants per stem must lie in [1, 8]");
  }
  std::mt19937_64 rng(detail::derive_seed(seed, "desk-language"));
  std::set<std::string> used;
  std::uniform_int_distribution<std::size_t> len(2, 3);
  for (std::size_t i = 0; i < neutral_words; ++i) neutral_.push_back(fresh_word(rng, len(rng), used));
  for (std::size_t e = 0; e < kNumEvents; ++e) {
    std::vector<std::string> stems;
    for (std::size_t s = 0; s < stems_per_event; ++s) stems.push_back(fresh_word(rng, 3, used));
    for (std::size_t v = 0; v < variants_per_stem; ++v) {
      for (const auto& stem : stems) {
        auto w = stem + std::string(kSuffixes[v]);
        used.insert(w);
        keywords_[e].push_back(std::move(w));
      }
    }
  }
  for (std::size_t i = 0; i < 40; ++i) source_style_.push_back(fresh_word(rng, 2, used));
  for (std::size_t i = 0; i < 40; ++i) target_style_.push_back(fresh_word(rng, 2, used));
}

std::vector<std::string> Language::all_keywords() const {
  std::vector<std::string> out;
  for (const auto& k : keywords_) out.insert(out.end(), k.begin(), k.end());
  return out;
}

Dataset generate(const Language& lang, const CorpusSpec& spec) {
  if (spec.min_tokens == 0 || spec.max_tokens < spec.min_tokens) {
    throw InputError("token range must satisfy 1 <= min <= max");
  }
  double total_rate = 0.0;
  for (double r : spec.event_rates) {
    if (r < 0.0) throw InputError("event rates must be >= 0");
    total_rate += r;
  }
  if (total_rate > 1.0 + 1e-12) throw InputError("event rates sum above 1");

  std::mt19937_64 rng(detail::derive_seed(spec.seed, "desk-generate:" + spec.name));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(spec.min_tokens, spec.max_tokens);
  const auto nn = static_cast<double>(lang.neutral().size());
  const auto lo = static_cast<std::size_t>(std::floor(spec.neutral_slice.first * nn));
  const auto hi = static_cast<std::size_t>(std::floor(spec.neutral_slice.second * nn));
  if (!(spec.neutral_slice.first >= 0.0 && spec.neutral_slice.second <= 1.0) || hi <= lo) {
    throw InputError("neutral slice must be a non-empty sub-range of [0, 1]");
  }
  std::uniform_int_distribution<std::size_t> neutral(lo, hi - 1);
  const auto& style = spec.domain == Domain::target ? lang.target_style() : lang.source_style();
  std::uniform_int_distribution<std::size_t> style_pick(0, style.size() - 1);
  std::uniform_int_distribution<std::size_t> any_event(0, kNumEvents - 1);

  std::vector<double> channel_cdf;
  double channel_total = 0.0;
  for (const auto& [name, w] : spec.channels) {
    channel_total += w;
    channel_cdf.push_back(channel_total);
  }

  Dataset d(spec.name);
  for (std::size_t i = 0; i < spec.size; ++i) {
    std::optional<Event> event;
    double r = unit(rng);
    for (std::size_t e = 0; e < kNumEvents; ++e) {
      if (r < spec.event_rates[e]) {
        event = static_cast<Event>(e);
        break;
      }
      r -= spec.event_rates[e];
    }

    std::vector<std::string> tokens;
    const auto n = length(rng);
    for (std::size_t t = 0; t < n; ++t) tokens.push_back(lang.neutral()[neutral(rng)]);
    auto insert_at_random = [&](std::string w) {
      std::uniform_int_distribution<std::size_t> pos(0, tokens.size());
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos(rng)), std::move(w));
    };
    if (event) {
      const auto& kws = lang.keywords(*event);
      const auto limit = spec.keyword_variants == 0 ? kws.size()
                                                    : std::min(spec.keyword_variants, kws.size());
      std::uniform_int_distribution<std::size_t> kw(0, limit - 1);
      insert_at_random(kws[kw(rng)]);
    }
    for (std::size_t s = 0; s < spec.style_tokens; ++s) insert_at_random(style[style_pick(rng)]);

    std::string text;
    for (const auto& t : tokens) {
      if (!text.empty()) text.push_back(' ');
      text += t;
    }

    LabelVector v = event ? labels_for(*event) : clean_labels();
    if (spec.label_noise > 0.0 && unit(rng) < spec.label_noise) {
      v = event ? clean_labels() : labels_for(static_cast<Event>(any_event(rng)));
    }

    Sample s;
    s.id = spec.id_prefix + "-" + pad_index(i);
    s.text = std::move(text);
    s.domain = spec.domain;
    s.metadata["event"] = event ? std::string(kEventNames[static_cast<std::size_t>(*event)]) : "none";
    if (!spec.channels.empty()) {
      const double c = unit(rng) * channel_total;
      std::size_t k = 0;
      while (k + 1 < channel_cdf.size() && c >= channel_cdf[k]) ++k;
      s.metadata["channel"] = spec.channels[k].first;
    }
    s.labels.push_back({"desk", Role::oracle, v, 0});
    d.add(std::move(s));
  }
  return d;
}

std::array<double, kNumEvents> uniform_rates(double rate) {
  std::array<double, kNumEvents> r;
  r.fill(rate);
  return r;
}

std::array<double, kNumEvents> rare_rates() {
  // Per category: S, H, V = 1.5%; S3, H2, V2 = 1%; HR, SH = 1.5%.
  return {0.005, 0.010, 0.005, 0.010, 0.005, 0.010, 0.015, 0.015};
}

Model planted_keyword_model(const std::string& keyword, Category category,
                            FeaturizerConfig featurizer) {
  ModelSpec spec;
  spec.featurizer = std::move(featurizer);
  spec.network.d_model = 4;
  spec.network.dropout = 0.0;
  spec.network.critic_hidden = {4};
  Model model(spec);
  auto& p = model.network().mutable_params();
  auto zero = [](std::vector<float>& v) { std::fill(v.begin(), v.end(), 0.0f); };
  zero(p.encoder_weight);
  zero(p.encoder_bias);
  for (auto& h : p.heads) {
    zero(h.hidden.weight);
    zero(h.hidden.bias);
    zero(h.output.weight);
    h.output.bias[0] = -4.0f;
  }
  for (auto& l : p.critic) {
    zero(l.weight);
    zero(l.bias);
  }
  const auto f = hash_feature("w1:" + keyword, model.featurizer_config());
  const auto d = model.network().config().d_model;
  p.encoder_weight[static_cast<std::size_t>(f.index) * d] = static_cast<float>(f.sign);
  auto& head = p.heads[index_of(category)];
  head.hidden.weight[0] = 10.0f;  // input unit 0 -> hidden unit 0
  head.output.weight[0] = 100.0f;
  return model;
}

std::vector<std::string> flip_labels(Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InputError("flip fraction must lie in [0, 1]");
  std::vector<std::string> ids;
  for (const auto& s : d) ids.push_back(s.id);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  auto chosen = select_random(ids, k, detail::derive_seed(seed, "flip"));
  std::mt19937_64 rng(detail::derive_seed(seed, "flip-event"));
  std::uniform_int_distribution<std::size_t> any_event(0, kNumEvents - 1);
  for (const auto& id : chosen) {
    const auto* s = d.find(id);
    const bool undesired = s->consolidated && is_undesired(*s->consolidated);
    const auto v = undesired ? clean_labels() : labels_for(static_cast<Event>(any_event(rng)));
    std::int64_t ts = 0;
    for (const auto& r : s->labels) ts = std::max(ts, r.timestamp);
    d.add_label(id, {"flip", Role::oracle, v, ts + 1});
  }
  return chosen;
}

ModelSpec model_spec() {
  ModelSpec spec;
  spec.featurizer.dimensionality = 1u << 16;
  spec.network.input_dim = spec.featurizer.dimensionality;
  spec.network.d_model = 32;
  spec.network.critic_hidden = {64, 64};
  return spec;
}

TrainConfig train_config() {
  TrainConfig cfg;
  cfg.learning_rate = 4.0;
  cfg.batch_size = 32;
  cfg.max_epochs = 20;
  return cfg;
}

}  // namespace modpipe::desk
