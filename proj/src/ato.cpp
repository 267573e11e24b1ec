#include "atba/ato.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

#include "atba/metrics.hpp"

namespace atba {
namespace ato {

namespace {

// A batch pre-cut for a given trigger length: content already truncated and
// the insertion offset fixed, so every candidate trigger of that length is
// scored on byte-identical context.
struct SplicedBatch {
  struct Item {
    TokenSeq content;
    std::size_t offset = 0;
  };
  std::vector<Item> items;
  std::size_t trigger_len = 0;

  TokenSeq splice(std::size_t i, const TriggerSeq& trigger) const {
    const Item& item = items[i];
    TokenSeq tokens = item.content;
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(item.offset),
                  trigger.begin(), trigger.end());
    return tokens;
  }
};

SplicedBatch make_spliced(std::span<const Example> batch, std::size_t trigger_len,
                          TriggerPosition position, std::size_t seq_max_len,
                          std::uint64_t splice_seed) {
  if (batch.empty()) throw std::invalid_argument("ato: empty batch");
  SplicedBatch spliced;
  spliced.trigger_len = trigger_len;
  spliced.items.reserve(batch.size());
  Rng rng(splice_seed);
  const std::size_t keep = seq_max_len > trigger_len ? seq_max_len - trigger_len : 0;
  for (const auto& ex : batch) {
    SplicedBatch::Item item;
    item.content.assign(ex.tokens.begin(),
                        ex.tokens.begin() + static_cast<std::ptrdiff_t>(
                                                std::min(keep, ex.tokens.size())));
    switch (position) {
      case TriggerPosition::kPrefix:
        item.offset = 0;
        break;
      case TriggerPosition::kSuffix:
        item.offset = item.content.size();
        break;
      case TriggerPosition::kRandom:
        item.offset = static_cast<std::size_t>(rng.below(item.content.size() + 1));
        break;
    }
    spliced.items.push_back(std::move(item));
  }
  return spliced;
}

double spliced_loss(const ReferenceModel& shadow, const SplicedBatch& spliced,
                    const TriggerSeq& trigger, std::size_t target_label) {
  double loss = 0.0;
  for (std::size_t i = 0; i < spliced.items.size(); ++i) {
    const TokenSeq tokens = spliced.splice(i, trigger);
    loss += cross_entropy(forward(shadow, tokens).logits, target_label);
  }
  return loss / static_cast<double>(spliced.items.size());
}

std::vector<Vec> spliced_gradient(const ReferenceModel& shadow,
                                  const SplicedBatch& spliced,
                                  const TriggerSeq& trigger,
                                  std::size_t target_label) {
  const std::size_t len = trigger.size();
  std::vector<Vec> grads(len, Vec(shadow.config.embed_dim, 0.0));
  for (std::size_t i = 0; i < spliced.items.size(); ++i) {
    const TokenSeq tokens = spliced.splice(i, trigger);
    const ForwardTrace trace = forward(shadow, tokens);
    const Gradients g = backward(shadow, trace, tokens, target_label);
    const std::size_t offset = spliced.items[i].offset;
    for (std::size_t pos = 0; pos < len; ++pos) {
      add_inplace(grads[pos], g.per_position[offset + pos]);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(spliced.items.size());
  for (auto& g : grads) {
    for (double& x : g) x *= inv_n;
  }
  return grads;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n,
                                                    std::size_t batch_size,
                                                    Rng rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace

CacheList::CacheList(std::size_t capacity, double weight_perf, double weight_len)
    : capacity_(capacity), weight_perf_(weight_perf), weight_len_(weight_len) {
  if (capacity_ == 0) throw std::invalid_argument("CacheList: capacity must be >= 1");
}

void CacheList::update(const CacheEntry& entry) {
  auto dup = std::find_if(entries_.begin(), entries_.end(), [&](const CacheEntry& e) {
    return e.trigger == entry.trigger;
  });
  if (dup != entries_.end()) {
    dup->perf = entry.perf;
  } else {
    entries_.push_back(entry);
  }
  std::sort(entries_.begin(), entries_.end(), [this](const CacheEntry& a, const CacheEntry& b) {
    const double ka = key(a);
    const double kb = key(b);
    if (ka != kb) return ka < kb;
    if (a.length() != b.length()) return a.length() < b.length();
    return a.trigger < b.trigger;
  });
  if (entries_.size() > capacity_) entries_.resize(capacity_);
}

const CacheEntry& CacheList::best() const {
  if (entries_.empty()) throw std::logic_error("CacheList::best: cache is empty");
  return entries_.front();
}

TeacherLosses teacher_step(ReferenceModel& teacher, OptimizerState& opt,
                           std::span<const Example> clean_batch,
                           std::span<const Example> poisoned_batch, double beta) {
  if (clean_batch.empty()) {
    throw std::invalid_argument("teacher_step: empty clean batch");
  }
  if (beta < 0.0) throw std::domain_error("teacher_step: beta must be >= 0");

  Gradients grads = zero_gradients(teacher);
  TeacherLosses losses;

  const double inv_clean = 1.0 / static_cast<double>(clean_batch.size());
  for (const auto& ex : clean_batch) {
    const ForwardTrace trace = forward(teacher, ex.tokens);
    losses.clean += cross_entropy(trace.logits, ex.label) * inv_clean;
    accumulate_gradients(grads, backward(teacher, trace, ex.tokens, ex.label), inv_clean);
  }
  if (!poisoned_batch.empty() && beta != 0.0) {
    const double inv_poison = 1.0 / static_cast<double>(poisoned_batch.size());
    for (const auto& ex : poisoned_batch) {
      const ForwardTrace trace = forward(teacher, ex.tokens);
      losses.poison += cross_entropy(trace.logits, ex.label) * inv_poison;
      accumulate_gradients(grads, backward(teacher, trace, ex.tokens, ex.label),
                           beta * inv_poison);
    }
  }
  if (!std::isfinite(losses.clean) || !std::isfinite(losses.poison)) {
    throw std::runtime_error("teacher_step: training divergence, non-finite loss");
  }
  adam_step(teacher, opt, grads);
  return losses;
}

ShadowLosses shadow_step(ReferenceModel& shadow, OptimizerState& opt,
                         const ReferenceModel& teacher,
                         std::span<const Example> clean_batch, double alpha,
                         double temp) {
  if (clean_batch.empty()) {
    throw std::invalid_argument("shadow_step: empty clean batch");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::domain_error("shadow_step: alpha must be in [0, 1]");
  }
  Gradients grads = zero_gradients(shadow);
  ShadowLosses losses;
  const double inv_n = 1.0 / static_cast<double>(clean_batch.size());
  for (const auto& ex : clean_batch) {
    const Vec teacher_logits = forward(teacher, ex.tokens).logits;
    const ForwardTrace trace = forward(shadow, ex.tokens);
    losses.ce += cross_entropy(trace.logits, ex.label) * inv_n;
    losses.kd += kl_div_t(teacher_logits, trace.logits, temp) * inv_n;
    // alpha here weighs the teacher's contribution; backward_kd's first
    // weight is the hard-label share.
    accumulate_gradients(grads,
                         backward_kd(shadow, trace, ex.tokens, ex.label, teacher_logits,
                                     1.0 - alpha, temp),
                         inv_n);
  }
  if (!std::isfinite(losses.ce) || !std::isfinite(losses.kd)) {
    throw std::runtime_error("shadow_step: training divergence, non-finite loss");
  }
  adam_step(shadow, opt, grads);
  return losses;
}

std::vector<Vec> trigger_gradient(const ReferenceModel& shadow,
                                  std::span<const Example> batch,
                                  const TriggerSeq& trigger, std::size_t target_label,
                                  TriggerPosition position, std::size_t seq_max_len,
                                  std::uint64_t splice_seed) {
  if (trigger.empty()) throw std::invalid_argument("trigger_gradient: empty trigger");
  const SplicedBatch spliced =
      make_spliced(batch, trigger.size(), position, seq_max_len, splice_seed);
  return spliced_gradient(shadow, spliced, trigger, target_label);
}

std::vector<TokenId> hotflip_candidates(const Vec& grad, const Vec& cur_embed,
                                        const Matrix& embed,
                                        std::span<const TokenId> allowed,
                                        std::size_t k) {
  if (allowed.empty()) {
    throw std::invalid_argument("hotflip_candidates: allowed token set is empty");
  }
  if (k == 0 || k > allowed.size()) {
    throw std::invalid_argument("hotflip_candidates: k must be in [1, |allowed|]");
  }
  if (grad.size() != embed.cols || cur_embed.size() != embed.cols) {
    throw std::invalid_argument("hotflip_candidates: embedding dimension mismatch");
  }

  const double base = dot(cur_embed, grad);
  std::vector<std::pair<double, TokenId>> scored;
  scored.reserve(allowed.size());
  for (TokenId token : allowed) {
    if (token < 0 || static_cast<std::size_t>(token) >= embed.rows) {
      throw std::out_of_range("hotflip_candidates: allowed token out of vocabulary");
    }
    const double* row = embed.row_ptr(static_cast<std::size_t>(token));
    double s = -base;
    for (std::size_t j = 0; j < embed.cols; ++j) s += row[j] * grad[j];
    scored.emplace_back(s, token);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<TokenId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

double trigger_batch_loss(const ReferenceModel& shadow, std::span<const Example> batch,
                          const TriggerSeq& trigger, std::size_t target_label,
                          TriggerPosition position, std::size_t seq_max_len,
                          std::uint64_t splice_seed) {
  if (trigger.empty()) throw std::invalid_argument("trigger_batch_loss: empty trigger");
  const SplicedBatch spliced =
      make_spliced(batch, trigger.size(), position, seq_max_len, splice_seed);
  return spliced_loss(shadow, spliced, trigger, target_label);
}

TriggerSeq beam_update(const ReferenceModel& shadow, std::span<const Example> batch,
                       const TriggerSeq& trigger, std::size_t target_label,
                       std::span<const TokenId> allowed, std::size_t beam_k,
                       TriggerPosition position, std::size_t seq_max_len,
                       std::uint64_t splice_seed) {
  if (trigger.empty()) throw std::invalid_argument("beam_update: empty trigger");
  if (beam_k == 0) throw std::invalid_argument("beam_update: beam_k must be >= 1");

  const SplicedBatch spliced =
      make_spliced(batch, trigger.size(), position, seq_max_len, splice_seed);

  struct Beam {
    TriggerSeq trig;
    double loss;
  };
  std::vector<Beam> beams{{trigger, spliced_loss(shadow, spliced, trigger, target_label)}};

  const std::size_t flips = std::min(beam_k, allowed.size());
  for (std::size_t pos = 0; pos < trigger.size(); ++pos) {
    std::set<TriggerSeq> pool;
    for (const auto& beam : beams) {
      const Vec g = spliced_gradient(shadow, spliced, beam.trig, target_label)[pos];
      const Vec cur = shadow.embed.row(static_cast<std::size_t>(beam.trig[pos]));
      auto cands = hotflip_candidates(g, cur, shadow.embed, allowed, flips);
      cands.push_back(beam.trig[pos]);  // keep-current: no-regression guarantee
      for (TokenId t : cands) {
        TriggerSeq next = beam.trig;
        next[pos] = t;
        pool.insert(std::move(next));
      }
    }
    std::vector<Beam> scored;
    scored.reserve(pool.size());
    for (const auto& cand : pool) {
      scored.push_back({cand, spliced_loss(shadow, spliced, cand, target_label)});
    }
    std::sort(scored.begin(), scored.end(), [](const Beam& a, const Beam& b) {
      if (a.loss != b.loss) return a.loss < b.loss;
      return a.trig < b.trig;
    });
    if (scored.size() > beam_k) scored.resize(beam_k);
    beams = std::move(scored);
  }
  return beams.front().trig;
}

std::size_t length_decision(std::size_t len, double perf, double low, double high,
                            std::size_t max_trigger_len) {
  if (perf > high) return len > 1 ? len - 1 : len;
  if (perf < low) return len < max_trigger_len ? len + 1 : len;
  return len;
}

TriggerSeq adapt_length(const ReferenceModel& shadow, std::span<const Example> batch,
                        const TriggerSeq& trigger, double perf, double low, double high,
                        std::size_t target_label, std::span<const TokenId> allowed,
                        TriggerPosition position, std::size_t max_trigger_len,
                        std::size_t seq_max_len, std::uint64_t splice_seed) {
  if (trigger.empty()) throw std::invalid_argument("adapt_length: empty trigger");
  if (perf < 0.0 || perf > 100.0) {
    throw std::domain_error("adapt_length: perf must be in [0, 100]");
  }
  const std::size_t next = length_decision(trigger.size(), perf, low, high, max_trigger_len);
  if (next == trigger.size()) return trigger;

  const SplicedBatch spliced = make_spliced(batch, next, position, seq_max_len, splice_seed);
  TriggerSeq best;
  double best_loss = std::numeric_limits<double>::infinity();
  auto consider = [&](TriggerSeq cand) {
    const double loss = spliced_loss(shadow, spliced, cand, target_label);
    if (loss < best_loss) {
      best_loss = loss;
      best = std::move(cand);
    }
  };
  if (next < trigger.size()) {
    // Drop the token whose removal leaves the lowest loss.
    for (std::size_t drop = 0; drop < trigger.size(); ++drop) {
      TriggerSeq cand = trigger;
      cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(drop));
      consider(std::move(cand));
    }
  } else {
    // Append the allowed token that helps the most.
    if (allowed.empty()) throw std::invalid_argument("adapt_length: allowed set is empty");
    for (TokenId token : allowed) {
      TriggerSeq cand = trigger;
      cand.push_back(token);
      consider(std::move(cand));
    }
  }
  return best;
}

namespace {

std::vector<Example> gather(const std::vector<Example>& split,
                            const std::vector<std::size_t>& indices) {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) out.push_back(split[idx]);
  return out;
}

// Clean-label training pass (teacher_step with no poison term).
void clean_epoch(ReferenceModel& model, OptimizerState& opt,
                 const std::vector<Example>& train, std::size_t batch_size, Rng rng) {
  for (const auto& chunk : batch_indices(train.size(), batch_size, rng)) {
    const auto batch = gather(train, chunk);
    teacher_step(model, opt, batch, {}, 0.0);
  }
}

}  // namespace

AtoResult run_ato(const Corpus& corpus, const ttg::TargetTriggerSet& trigger_set,
                  const ModelConfig& teacher_cfg, const ModelConfig& shadow_cfg,
                  const AtoConfig& cfg) {
  if (corpus.train.empty()) throw std::invalid_argument("run_ato: empty train split");
  if (cfg.batch_size == 0) throw std::invalid_argument("run_ato: batch_size must be >= 1");
  if (cfg.initial_trigger_len == 0 || cfg.initial_trigger_len > cfg.trigger_max_len) {
    throw std::invalid_argument("run_ato: initial trigger length out of [1, trigger_max_len]");
  }

  std::vector<TokenId> allowed;
  if (cfg.full_vocab_search) {
    for (std::size_t id = 2; id < corpus.vocab.size(); ++id) {
      allowed.push_back(static_cast<TokenId>(id));  // skip pad/unk
    }
  } else {
    allowed = trigger_set.tokens();
  }
  if (allowed.empty()) throw std::invalid_argument("run_ato: empty trigger search space");

  const std::size_t y_t = corpus.target_label;
  const Rng root(cfg.seed);

  ReferenceModel teacher = init_model(teacher_cfg);
  ReferenceModel shadow = init_model(shadow_cfg);
  OptimizerState opt_teacher(teacher, cfg.learning_rate);
  OptimizerState opt_shadow(shadow, cfg.learning_rate);

  // Warm up both models on clean data.
  for (std::size_t epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
    clean_epoch(teacher, opt_teacher, corpus.train, cfg.batch_size, root.fork(10 + epoch));
    clean_epoch(shadow, opt_shadow, corpus.train, cfg.batch_size, root.fork(40 + epoch));
  }

  bool any_eligible = false;
  for (const auto& ex : corpus.train) any_eligible |= ex.label != y_t;

  // Fixed probe batch for the length controller's loss lookahead.
  std::vector<Example> probe;
  {
    std::vector<std::size_t> order(corpus.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng prober = root.fork(3);
    prober.shuffle(order);
    order.resize(std::min(order.size(), cfg.batch_size * 4));
    probe = gather(corpus.train, order);
  }

  TriggerSeq trigger(cfg.initial_trigger_len, allowed.front());
  if (!cfg.full_vocab_search) {
    // Highest-key candidate repeated to the initial length.
    trigger.assign(cfg.initial_trigger_len, trigger_set.kept.front().token);
  }

  CacheList cache(cfg.cache_capacity, cfg.cache_weight_perf, cfg.cache_weight_len);
  std::vector<HistoryRow> history;

  PoisonSpec spec;
  spec.target_label = y_t;
  spec.position = cfg.position;

  // The poisoned batch is derived from each clean batch: the first
  // rate-fraction of its non-target members (at least one) get poisoned
  // copies. Batch orders reshuffle per epoch, so poisoned contexts rotate
  // over the whole train split and the backdoor generalizes beyond a frozen
  // subset even at a 1% rate.
  auto poison_chunk = [&](const std::vector<std::size_t>& chunk, Rng& rng,
                          std::vector<Example>& clean_out,
                          std::vector<Example>& poisoned_out) {
    clean_out.clear();
    poisoned_out.clear();
    if (!any_eligible) {
      for (std::size_t idx : chunk) clean_out.push_back(corpus.train[idx]);
      return;
    }
    const auto quota = std::clamp<std::size_t>(
        static_cast<std::size_t>(
            std::llround(cfg.poison_rate * static_cast<double>(chunk.size()))),
        1, chunk.size());
    for (std::size_t idx : chunk) {
      const bool take = corpus.train[idx].label != y_t && poisoned_out.size() < quota;
      if (take) {
        poisoned_out.push_back(
            poison(corpus.train[idx], spec, corpus.max_len, corpus.vocab.size(), rng));
      }
      if (!take || cfg.poison_append) clean_out.push_back(corpus.train[idx]);
    }
  };

  for (std::size_t epoch = 1; epoch <= cfg.ato_epochs; ++epoch) {
    spec.trigger = trigger;
    HistoryRow row;
    row.epoch = epoch;

    const auto batches = batch_indices(corpus.train.size(), cfg.batch_size,
                                       root.fork(100 + epoch));
    Rng splice_rng = root.fork(1000 + epoch);
    std::vector<Example> clean_batch, poisoned_batch;
    std::size_t batch_no = 0;
    for (const auto& chunk : batches) {
      spec.trigger = trigger;
      poison_chunk(chunk, splice_rng, clean_batch, poisoned_batch);
      if (clean_batch.empty()) continue;

      const TeacherLosses tl =
          teacher_step(teacher, opt_teacher, clean_batch, poisoned_batch, cfg.beta);
      row.teacher_clean_loss += tl.clean;
      row.teacher_poison_loss += tl.poison;
      shadow_step(shadow, opt_shadow, teacher, clean_batch, cfg.alpha, cfg.temp);

      const std::uint64_t seed = cfg.seed ^ (epoch * 100003 + batch_no);
      trigger = beam_update(shadow, clean_batch, trigger, y_t, allowed, cfg.beam_k,
                            cfg.position, corpus.max_len, seed);
      ++batch_no;
    }
    if (batch_no > 0) {
      row.teacher_clean_loss /= static_cast<double>(batch_no);
      row.teacher_poison_loss /= static_cast<double>(batch_no);
    }

    // Attack performance on the fixed poisoned validation split.
    const double perf =
        100.0 * measure_asr(shadow, corpus.val, trigger, y_t, cfg.position, corpus.max_len);
    row.trigger = trigger;
    row.perf = perf;
    row.shadow_cacc = measure_accuracy(shadow, corpus.val);
    history.push_back(row);

    const CacheEntry entry{trigger, perf};
    trigger = adapt_length(shadow, probe, trigger, perf, cfg.perf_low, cfg.perf_high,
                           y_t, allowed, cfg.position, cfg.trigger_max_len,
                           corpus.max_len, cfg.seed ^ (epoch * 7919));
    // Only triggers meeting the controller's minimum attack performance are
    // release candidates; the weighted key then trades length against
    // performance among those.
    if (perf >= cfg.perf_low) cache.update(entry);
  }

  if (cache.empty()) {
    // Nothing reached the band; fall back to the strongest trigger seen.
    const HistoryRow* best_row = &history.front();
    for (const auto& row : history) {
      if (row.perf >= best_row->perf) best_row = &row;
    }
    cache.update({best_row->trigger, best_row->perf});
  }

  AtoResult result;
  result.trigger = cache.best().trigger;

  // Consolidate the teacher on the selected trigger (still the same
  // clean + beta * poison objective, trigger now fixed).
  spec.trigger = result.trigger;
  for (std::size_t epoch = 1; epoch <= cfg.finalize_epochs; ++epoch) {
    const auto batches = batch_indices(corpus.train.size(), cfg.batch_size,
                                       root.fork(5000 + epoch));
    Rng splice_rng = root.fork(6000 + epoch);
    std::vector<Example> clean_batch, poisoned_batch;
    for (const auto& chunk : batches) {
      poison_chunk(chunk, splice_rng, clean_batch, poisoned_batch);
      if (clean_batch.empty()) continue;
      teacher_step(teacher, opt_teacher, clean_batch, poisoned_batch, cfg.beta);
    }
  }

  result.teacher = std::move(teacher);
  result.shadow = std::move(shadow);
  result.history = std::move(history);
  result.cache = cache;
  return result;
}

}  // namespace ato
}  // namespace atba
