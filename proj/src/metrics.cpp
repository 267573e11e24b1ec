#include "atba/metrics.hpp"

#include <stdexcept>

namespace atba {

std::size_t predict(const ReferenceModel& model, const TokenSeq& tokens) {
  const Vec logits = forward(model, tokens).logits;
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

double measure_accuracy(const ReferenceModel& model, std::span<const Example> split) {
  if (split.empty()) throw std::invalid_argument("measure_accuracy: empty split");
  std::size_t correct = 0;
  for (const auto& ex : split) {
    if (predict(model, ex.tokens) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

double measure_asr(const ReferenceModel& model, std::span<const Example> split,
                   const TriggerSeq& trigger, std::size_t target_label,
                   TriggerPosition position, std::size_t max_len,
                   std::size_t* n_eligible, std::uint64_t splice_seed) {
  PoisonSpec spec;
  spec.trigger = trigger;
  spec.target_label = target_label;
  spec.position = position;
  Rng rng(splice_seed);

  std::size_t eligible = 0;
  std::size_t hits = 0;
  for (const auto& ex : split) {
    if (ex.label == target_label) continue;
    ++eligible;
    const Example poisoned = poison(ex, spec, max_len, model.config.vocab_size, rng);
    if (predict(model, poisoned.tokens) == target_label) ++hits;
  }
  if (n_eligible) *n_eligible = eligible;
  if (eligible == 0) {
    throw std::invalid_argument("measure_asr: no non-target examples to poison");
  }
  return static_cast<double>(hits) / static_cast<double>(eligible);
}

}  // namespace atba
