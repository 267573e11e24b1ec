#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "atba/model.hpp"
#include "atba/rng.hpp"

namespace atba {

// Token table with reserved PAD=0 and UNK=1. Ids are assigned from the
// training split only: frequency descending, ties lexicographic, so the
// assignment is identical across runs and platforms.
struct Vocab {
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;

  std::vector<std::string> id_to_token{"<pad>", "<unk>"};
  std::unordered_map<std::string, TokenId> token_to_id;

  std::size_t size() const { return id_to_token.size(); }
  bool contains(const std::string& token) const {
    return token_to_id.find(token) != token_to_id.end();
  }
  // UNK for out-of-vocabulary tokens.
  TokenId id_of(const std::string& token) const;
  const std::string& token_of(TokenId id) const;  // throws on bad id
};

Vocab build_vocab(const std::vector<std::vector<std::string>>& train_docs,
                  std::size_t min_freq);

struct Example {
  TokenSeq tokens;
  std::size_t label = 0;
  bool poisoned = false;
};

struct Corpus {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
  Vocab vocab;
  std::size_t num_classes = 0;
  std::size_t target_label = 0;
  std::size_t max_len = 128;
};

enum class TriggerPosition { kPrefix, kSuffix, kRandom };

using TriggerSeq = TokenSeq;

struct PoisonSpec {
  TriggerSeq trigger;
  std::size_t target_label = 0;
  TriggerPosition position = TriggerPosition::kPrefix;
  double rate = 0.1;  // fraction of eligible (non-target) examples, in (0, 1]
};

// Lowercase, split on whitespace/punctuation boundaries, punctuation dropped.
std::vector<std::string> tokenize(const std::string& text);

// x (+) trigger: inserts the trigger at the configured position, relabels to
// the target, and sets the poisoned flag. Content tokens are truncated from
// the tail to respect max_len; the trigger is never truncated.
Example poison(const Example& x, const PoisonSpec& spec, std::size_t max_len,
               std::size_t vocab_size, Rng& rng);

// Same, also reporting the position of the trigger's first token.
Example poison_with_offset(const Example& x, const PoisonSpec& spec,
                           std::size_t max_len, std::size_t vocab_size, Rng& rng,
                           std::size_t* trigger_offset);

struct PoisonedSplit {
  std::vector<Example> examples;       // chosen entries replaced by poisoned copies
  std::vector<std::size_t> chosen;     // indices that were poisoned
  bool none_eligible = false;          // warning: no non-target examples found
};

// Poisons exactly floor(rate * |non-target examples|) examples, chosen
// without replacement (seeded) among examples whose label differs from the
// target; everything else is untouched.
PoisonedSplit poison_fraction(const std::vector<Example>& split, const PoisonSpec& spec,
                              std::size_t max_len, std::size_t vocab_size, Rng& rng);

// Synthetic classification task. Each class owns a disjoint set of indicative
// tokens; every example mixes indicative tokens (with probability
// signal_strength per position) with shared background tokens, so the classes
// are near-perfectly separable by construction.
Corpus synth_task(std::size_t n_per_class, std::size_t num_classes,
                  std::size_t vocab_size, double signal_strength,
                  std::uint64_t seed);

struct TsvSchema {
  std::size_t num_classes = 2;
  std::size_t target_label = 0;
  std::size_t max_len = 128;
  std::size_t min_token_freq = 1;
  std::uint64_t seed = 0;
};

// One example per line: integer label, tab, text. Deterministic 80/10/10
// split by seeded shuffle; vocabulary from the train split.
Corpus load_tsv(const std::string& path, const TsvSchema& schema);

}  // namespace atba
