#pragma once

#include <span>
#include <vector>

#include "atba/data.hpp"
#include "atba/model.hpp"
#include "atba/ttg.hpp"

namespace atba {
namespace ato {

struct CacheEntry {
  TriggerSeq trigger;
  double perf = 0.0;  // shadow-model ASR in percent on the poisoned val split
  std::size_t length() const { return trigger.size(); }
};

// Capacity-bounded record of historical triggers, always sorted ascending by
// perf * weight_perf + length * weight_len. With the default weights
// (-0.02, 1) a low key means high attack performance at short length, so the
// head entry is the current best trade-off.
class CacheList {
 public:
  explicit CacheList(std::size_t capacity = 10, double weight_perf = -0.02,
                     double weight_len = 1.0);

  // Inserts (replacing any duplicate trigger with the fresher perf),
  // re-sorts, and truncates to capacity by dropping the worst key.
  void update(const CacheEntry& entry);

  double key(const CacheEntry& entry) const {
    return entry.perf * weight_perf_ + static_cast<double>(entry.length()) * weight_len_;
  }

  const std::vector<CacheEntry>& entries() const { return entries_; }
  const CacheEntry& best() const;
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  double weight_perf() const { return weight_perf_; }
  double weight_len() const { return weight_len_; }

 private:
  std::vector<CacheEntry> entries_;
  std::size_t capacity_;
  double weight_perf_;
  double weight_len_;
};

struct AtoConfig {
  double alpha = 0.8;            // teacher contribution in the shadow's KD mix
                                 // (0 = label-only training, 1 = pure KD)
  double temp = 1.0;             // KD temperature
  double beta = 0.3;             // backdoor weight in the teacher loss
  double perf_low = 80.0;        // L: grow the trigger below this ASR%
  double perf_high = 90.0;       // H: shrink the trigger above this ASR%
  std::size_t beam_k = 3;
  std::size_t warmup_epochs = 3;
  std::size_t ato_epochs = 10;
  std::size_t finalize_epochs = 2;  // teacher consolidation on the final trigger
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double poison_rate = 0.1;
  TriggerPosition position = TriggerPosition::kPrefix;
  bool poison_append = true;     // poisoned copies join the clean originals
  std::size_t initial_trigger_len = 2;
  std::size_t trigger_max_len = 8;
  std::size_t cache_capacity = 10;
  double cache_weight_perf = -0.02;
  double cache_weight_len = 1.0;
  bool full_vocab_search = false;  // ablation: search all tokens, not just the TTG set
  std::uint64_t seed = 0;
};

struct TeacherLosses {
  double clean = 0.0;
  double poison = 0.0;
};

struct ShadowLosses {
  double ce = 0.0;
  double kd = 0.0;
};

// One optimizer step on mean CE(clean) + beta * mean CE(poisoned). An empty
// poisoned batch behaves exactly like beta = 0.
TeacherLosses teacher_step(ReferenceModel& teacher, OptimizerState& opt,
                           std::span<const Example> clean_batch,
                           std::span<const Example> poisoned_batch, double beta);

// One optimizer step on (1 - alpha) * CE(shadow, labels)
// + alpha * temp^2 * KL(teacher || shadow), teacher frozen, clean data only.
// alpha is the teacher-contribution weight: 0 ignores the teacher entirely.
ShadowLosses shadow_step(ReferenceModel& shadow, OptimizerState& opt,
                         const ReferenceModel& teacher,
                         std::span<const Example> clean_batch, double alpha,
                         double temp);

// Mean over the batch (poisoned on the fly toward the target label) of the
// loss gradient at each trigger position's embedding.
std::vector<Vec> trigger_gradient(const ReferenceModel& shadow,
                                  std::span<const Example> batch,
                                  const TriggerSeq& trigger, std::size_t target_label,
                                  TriggerPosition position, std::size_t seq_max_len,
                                  std::uint64_t splice_seed = 0);

// The k allowed tokens minimizing (e' - e_cur)^T grad, by exhaustive
// dot products over the allowed embedding rows; ties break by ascending id.
std::vector<TokenId> hotflip_candidates(const Vec& grad, const Vec& cur_embed,
                                        const Matrix& embed,
                                        std::span<const TokenId> allowed,
                                        std::size_t k);

// Mean CE toward the target label over the batch poisoned with the trigger.
double trigger_batch_loss(const ReferenceModel& shadow, std::span<const Example> batch,
                          const TriggerSeq& trigger, std::size_t target_label,
                          TriggerPosition position, std::size_t seq_max_len,
                          std::uint64_t splice_seed = 0);

// Left-to-right beam search over trigger positions. Each beam expands with
// its gradient-ranked flip candidates plus keep-current, candidates are
// scored by true batch loss, and the best beam_k survive. Keep-current
// membership guarantees the returned trigger never scores worse than the
// input.
TriggerSeq beam_update(const ReferenceModel& shadow, std::span<const Example> batch,
                       const TriggerSeq& trigger, std::size_t target_label,
                       std::span<const TokenId> allowed, std::size_t beam_k,
                       TriggerPosition position, std::size_t seq_max_len,
                       std::uint64_t splice_seed = 0);

// The pure length controller: -1 above high, +1 below low, unchanged in
// between, clamped to [1, max_trigger_len].
std::size_t length_decision(std::size_t len, double perf, double low, double high,
                            std::size_t max_trigger_len);

// Applies length_decision; the token to drop or append is chosen by
// exhaustive one-step lookahead on the shadow batch loss.
TriggerSeq adapt_length(const ReferenceModel& shadow, std::span<const Example> batch,
                        const TriggerSeq& trigger, double perf, double low, double high,
                        std::size_t target_label, std::span<const TokenId> allowed,
                        TriggerPosition position, std::size_t max_trigger_len,
                        std::size_t seq_max_len, std::uint64_t splice_seed = 0);

struct HistoryRow {
  std::size_t epoch = 0;
  TriggerSeq trigger;            // the trigger measured this epoch
  double perf = 0.0;             // shadow ASR% on the poisoned val split
  double shadow_cacc = 0.0;      // shadow accuracy on the clean val split
  double teacher_clean_loss = 0.0;
  double teacher_poison_loss = 0.0;
};

struct AtoResult {
  ReferenceModel teacher;
  ReferenceModel shadow;
  TriggerSeq trigger;            // cache head after the final epoch
  std::vector<HistoryRow> history;
  CacheList cache;
};

// Algorithm: warm up teacher and shadow on clean data, then per epoch and
// batch interleave teacher_step (clean + poisoned-with-current-trigger),
// shadow_step (clean KD), and beam_update; per epoch measure the shadow ASR
// on the fixed poisoned val split, record it in the cache, and adapt the
// trigger length. Afterwards the teacher trains finalize_epochs more with
// the cache-head trigger.
AtoResult run_ato(const Corpus& corpus, const ttg::TargetTriggerSet& trigger_set,
                  const ModelConfig& teacher_cfg, const ModelConfig& shadow_cfg,
                  const AtoConfig& cfg);

}  // namespace ato
}  // namespace atba
