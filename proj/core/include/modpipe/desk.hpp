#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "modpipe/corpus.hpp"
#include "modpipe/model.hpp"
#include "modpipe/taxonomy.hpp"
#include "modpipe/train.hpp"

// Desk-scale synthetic corpora. A seeded pseudo-word language stands in for
// production traffic: neutral filler words, per-event keyword families
// (a few stems, each with suffix variants, so unseen variants still share
// character n-grams with seen ones), and per-domain style tokens.
namespace modpipe::desk {

// What a sample expresses. Subcategory events also make their parent positive.
enum class Event : std::uint8_t { S1, S3, H1, H2, V1, V2, HR, SH };
inline constexpr std::size_t kNumEvents = 8;

LabelVector labels_for(Event e);
// All categories negative.
LabelVector clean_labels();

class Language {
 public:
  explicit Language(std::uint64_t seed = 7, std::size_t neutral_words = 1500,
                    std::size_t stems_per_event = 3, std::size_t variants_per_stem = 8);

  const std::vector<std::string>& neutral() const noexcept { return neutral_; }
  // Variants ordered round-robin over stems.
  const std::vector<std::string>& keywords(Event e) const {
    return keywords_[static_cast<std::size_t>(e)];
  }
  const std::vector<std::string>& source_style() const noexcept { return source_style_; }
  const std::vector<std::string>& target_style() const noexcept { return target_style_; }
  std::vector<std::string> all_keywords() const;

 private:
  std::vector<std::string> neutral_;
  std::array<std::vector<std::string>, kNumEvents> keywords_;
  std::vector<std::string> source_style_;
  std::vector<std::string> target_style_;
};

struct CorpusSpec {
  std::string name = "desk";
  std::string id_prefix = "d";
  std::size_t size = 1000;
  // Probability that a sample carries each event; events are exclusive, so
  // the sum is the undesired fraction.
  std::array<double, kNumEvents> event_rates{};
  // Only the first `keyword_variants` variants of each event are used
  // (0: all).
  std::size_t keyword_variants = 0;
  // Fraction range [first, second) of the neutral vocabulary used for filler
  // words; disjoint ranges give two domains different background words.
  std::pair<double, double> neutral_slice{0.0, 1.0};
  std::size_t min_tokens = 6;
  std::size_t max_tokens = 14;
  Domain domain = Domain::source;
  // Style tokens mixed into each text: source style for Domain::source,
  // target style for Domain::target.
  std::size_t style_tokens = 0;
  // Fraction of labels replaced as in SimulatedAnnotator flips.
  double label_noise = 0.0;
  // Metadata "channel" values and their weights; empty: no channel metadata.
  std::vector<std::pair<std::string, double>> channels;
  std::uint64_t seed = 0;
};

// Labels are attached as one oracle record per sample ("desk" annotator),
// every category labeled. Metadata holds "event" ("none" for clean text).
Dataset generate(const Language& lang, const CorpusSpec& spec);

// Uniform rate for every event.
std::array<double, kNumEvents> uniform_rates(double rate);
// Production-like rare rates: every category lands between 1% and 2%.
std::array<double, kNumEvents> rare_rates();

// The word most associated with `category` in a planted model.
inline constexpr const char* kPlantedKeyword = "badword";

// A hand-set model whose `category` head fires only on the word unigram
// `keyword`: score ~0.018 without it, >= 0.99 for texts up to a few hundred
// characters containing it. Other heads stay near 0.018.
Model planted_keyword_model(const std::string& keyword = kPlantedKeyword,
                            Category category = Category::H,
                            FeaturizerConfig featurizer = {});

// Settings that learn the desk language in seconds on one core: a
// 2^16 hash space, d_model 32, critic {64, 64}, and plain SGD at lr 4,
// batch 32, 20 epochs. The library defaults target far larger corpora.
ModelSpec model_spec();
TrainConfig train_config();

// Replaces the label of round(fraction * n) samples chosen uniformly
// (undesired -> all negative; clean -> a random event). Returns the ids.
std::vector<std::string> flip_labels(Dataset& d, double fraction, std::uint64_t seed);

}  // namespace modpipe::desk
