#include "atba/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "atba/metrics.hpp"

namespace atba {
namespace kd {

namespace {

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
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

const char* role_name(ModelRole role) {
  switch (role) {
    case ModelRole::kTeacher: return "teacher";
    case ModelRole::kShadow: return "shadow";
    case ModelRole::kStudent: return "student";
  }
  return "unknown";
}

ReferenceModel train_clean_model(const Corpus& corpus, const ModelConfig& model_cfg,
                                 std::size_t epochs, std::size_t batch_size,
                                 double learning_rate, std::uint64_t seed) {
  if (corpus.train.empty()) throw std::invalid_argument("train_clean_model: empty train split");
  ReferenceModel model = init_model(model_cfg);
  OptimizerState opt(model, learning_rate);
  const Rng root(seed);
  std::vector<Example> batch;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& chunk : batch_indices(corpus.train.size(), batch_size,
                                           root.fork(10 + epoch))) {
      batch.clear();
      for (std::size_t idx : chunk) batch.push_back(corpus.train[idx]);
      ato::teacher_step(model, opt, batch, {}, 0.0);
    }
  }
  return model;
}

DistillResult distill_student(const ModelConfig& student_cfg,
                              const ReferenceModel& teacher, const Corpus& corpus,
                              const KdConfig& cfg) {
  if (corpus.train.empty()) throw std::invalid_argument("distill_student: empty train split");
  if (teacher.config.vocab_size != student_cfg.vocab_size) {
    throw std::invalid_argument("distill_student: teacher and student must share the vocabulary");
  }
  DistillResult result;
  result.student = init_model(student_cfg);
  OptimizerState opt(result.student, cfg.learning_rate);
  const Rng root(cfg.seed);
  std::vector<Example> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& chunk : batch_indices(corpus.train.size(), cfg.batch_size,
                                           root.fork(10 + epoch))) {
      batch.clear();
      for (std::size_t idx : chunk) {
        batch.push_back(corpus.train[idx]);
        if (corpus.train[idx].poisoned) ++result.poisoned_seen;
      }
      ato::shadow_step(result.student, opt, teacher, batch, cfg.alpha, cfg.temp);
    }
  }
  return result;
}

EvalReport evaluate(const ReferenceModel& model, const Corpus& corpus,
                    const TriggerSeq& trigger, std::size_t target_label,
                    TriggerPosition position, ModelRole role, std::uint64_t seed) {
  if (corpus.test.empty()) throw std::invalid_argument("evaluate: empty test split");
  EvalReport report;
  report.role = role;
  report.seed = seed;
  report.n_clean = corpus.test.size();
  report.cacc = measure_accuracy(model, corpus.test);
  std::size_t eligible = 0;
  report.asr = measure_asr(model, corpus.test, trigger, target_label, position,
                           corpus.max_len, &eligible, seed);
  report.n_poisoned = eligible;
  return report;
}

TriggerSeq rare_token_trigger(const Corpus& corpus, std::size_t len) {
  if (len == 0) throw std::invalid_argument("rare_token_trigger: len must be >= 1");
  std::vector<bool> in_nontarget(corpus.vocab.size(), false);
  for (const auto& ex : corpus.train) {
    if (ex.label == corpus.target_label) continue;
    for (TokenId id : ex.tokens) in_nontarget[static_cast<std::size_t>(id)] = true;
  }
  // Ids are assigned by descending frequency, so the tail holds the rarest
  // tokens. Target-exclusive words are skipped: a traditional attacker picks
  // tokens unrelated to the target class.
  TriggerSeq trigger;
  for (std::size_t id = corpus.vocab.size(); id-- > 2 && trigger.size() < len;) {
    if (in_nontarget[id]) trigger.push_back(static_cast<TokenId>(id));
  }
  if (trigger.size() < len) {
    throw std::runtime_error("rare_token_trigger: not enough non-target tokens in vocabulary");
  }
  return trigger;
}

BaselineResult baseline_attack(const Corpus& corpus, const TriggerSeq& fixed_trigger,
                               const ModelConfig& teacher_cfg,
                               const ModelConfig& student_cfg,
                               const ato::AtoConfig& inject_cfg, const KdConfig& kd_cfg) {
  if (fixed_trigger.empty()) {
    throw std::invalid_argument("baseline_attack: fixed trigger must be nonempty");
  }
  const std::size_t y_t = corpus.target_label;
  const Rng root(inject_cfg.seed);

  BaselineResult result;
  result.trigger = fixed_trigger;
  result.teacher = init_model(teacher_cfg);
  OptimizerState opt(result.teacher, inject_cfg.learning_rate);

  std::vector<Example> batch;
  for (std::size_t epoch = 0; epoch < inject_cfg.warmup_epochs; ++epoch) {
    for (const auto& chunk : batch_indices(corpus.train.size(), inject_cfg.batch_size,
                                           root.fork(10 + epoch))) {
      batch.clear();
      for (std::size_t idx : chunk) batch.push_back(corpus.train[idx]);
      ato::teacher_step(result.teacher, opt, batch, {}, 0.0);
    }
  }

  // Same per-batch poison derivation as run_ato (first rate-fraction of each
  // batch's non-target members), so baseline and ATO runs are matched at
  // equal seeds.
  bool any_eligible = false;
  for (const auto& ex : corpus.train) any_eligible |= ex.label != y_t;

  PoisonSpec spec;
  spec.trigger = fixed_trigger;
  spec.target_label = y_t;
  spec.position = inject_cfg.position;

  const std::size_t total_epochs = inject_cfg.ato_epochs + inject_cfg.finalize_epochs;
  std::vector<Example> clean_batch, poisoned_batch;
  for (std::size_t epoch = 1; epoch <= total_epochs; ++epoch) {
    const std::uint64_t stream = epoch <= inject_cfg.ato_epochs
                                     ? 100 + epoch
                                     : 5000 + (epoch - inject_cfg.ato_epochs);
    Rng splice_rng = root.fork(1000 + epoch);
    for (const auto& chunk : batch_indices(corpus.train.size(), inject_cfg.batch_size,
                                           root.fork(stream))) {
      clean_batch.clear();
      poisoned_batch.clear();
      const auto quota =
          any_eligible ? std::clamp<std::size_t>(
                             static_cast<std::size_t>(std::llround(
                                 inject_cfg.poison_rate *
                                 static_cast<double>(chunk.size()))),
                             1, chunk.size())
                       : 0;
      for (std::size_t idx : chunk) {
        const bool take =
            corpus.train[idx].label != y_t && poisoned_batch.size() < quota;
        if (take) {
          poisoned_batch.push_back(poison(corpus.train[idx], spec, corpus.max_len,
                                          corpus.vocab.size(), splice_rng));
        }
        if (!take || inject_cfg.poison_append) {
          clean_batch.push_back(corpus.train[idx]);
        }
      }
      if (clean_batch.empty()) continue;
      ato::teacher_step(result.teacher, opt, clean_batch, poisoned_batch, inject_cfg.beta);
    }
  }

  result.student = distill_student(student_cfg, result.teacher, corpus, kd_cfg).student;
  result.teacher_report = evaluate(result.teacher, corpus, fixed_trigger, y_t,
                                   inject_cfg.position, ModelRole::kTeacher, inject_cfg.seed);
  result.student_report = evaluate(result.student, corpus, fixed_trigger, y_t,
                                   inject_cfg.position, ModelRole::kStudent, kd_cfg.seed);
  return result;
}

std::vector<SweepCell> sweep_sensitivity(const Corpus& corpus,
                                         const ReferenceModel& teacher,
                                         const TriggerSeq& trigger,
                                         const std::vector<double>& alphas,
                                         const std::vector<double>& temps,
                                         const ModelConfig& student_cfg,
                                         const KdConfig& base_kd) {
  std::vector<SweepCell> cells;
  cells.reserve(alphas.size() * temps.size());
  for (double alpha : alphas) {
    for (double temp : temps) {
      KdConfig cfg = base_kd;
      cfg.alpha = alpha;
      cfg.temp = temp;
      const ReferenceModel student =
          distill_student(student_cfg, teacher, corpus, cfg).student;
      SweepCell cell;
      cell.alpha = alpha;
      cell.temp = temp;
      cell.report = evaluate(student, corpus, trigger, corpus.target_label,
                             TriggerPosition::kPrefix, ModelRole::kStudent, cfg.seed);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

namespace {

PipelineRow run_pipeline_row(const Corpus& corpus, const ttg::TargetTriggerSet& trigger_set,
                             double parameter, const ModelConfig& teacher_cfg,
                             const ModelConfig& shadow_cfg,
                             const std::vector<ModelConfig>& student_cfgs,
                             const ato::AtoConfig& ato_cfg, const KdConfig& kd_cfg) {
  const ato::AtoResult attack =
      ato::run_ato(corpus, trigger_set, teacher_cfg, shadow_cfg, ato_cfg);
  PipelineRow row;
  row.parameter = parameter;
  row.trigger = attack.trigger;
  row.teacher_report = evaluate(attack.teacher, corpus, attack.trigger, corpus.target_label,
                                ato_cfg.position, ModelRole::kTeacher, ato_cfg.seed);
  for (const auto& student_cfg : student_cfgs) {
    const ReferenceModel student =
        distill_student(student_cfg, attack.teacher, corpus, kd_cfg).student;
    row.student_reports.push_back(evaluate(student, corpus, attack.trigger,
                                           corpus.target_label, ato_cfg.position,
                                           ModelRole::kStudent, kd_cfg.seed));
  }
  return row;
}

}  // namespace

std::vector<PipelineRow> sweep_poison_rate(const Corpus& corpus,
                                           const ttg::TargetTriggerSet& trigger_set,
                                           const std::vector<double>& rates,
                                           const ModelConfig& teacher_cfg,
                                           const ModelConfig& shadow_cfg,
                                           const std::vector<ModelConfig>& student_cfgs,
                                           const ato::AtoConfig& base_ato,
                                           const KdConfig& kd_cfg) {
  std::vector<PipelineRow> rows;
  for (double rate : rates) {
    ato::AtoConfig cfg = base_ato;
    cfg.poison_rate = rate;
    rows.push_back(run_pipeline_row(corpus, trigger_set, rate, teacher_cfg, shadow_cfg,
                                    student_cfgs, cfg, kd_cfg));
  }
  return rows;
}

std::vector<PipelineRow> sweep_trigger_length(const Corpus& corpus,
                                              const ttg::TargetTriggerSet& trigger_set,
                                              const std::vector<std::size_t>& lengths,
                                              const ModelConfig& teacher_cfg,
                                              const ModelConfig& shadow_cfg,
                                              const std::vector<ModelConfig>& student_cfgs,
                                              const ato::AtoConfig& base_ato,
                                              const KdConfig& kd_cfg) {
  std::vector<PipelineRow> rows;
  for (std::size_t length : lengths) {
    ato::AtoConfig cfg = base_ato;
    // Pin the length: start there and disable the adaptation band.
    cfg.initial_trigger_len = length;
    cfg.trigger_max_len = std::max(cfg.trigger_max_len, length);
    cfg.perf_low = 0.0;
    cfg.perf_high = 100.0;
    rows.push_back(run_pipeline_row(corpus, trigger_set, static_cast<double>(length),
                                    teacher_cfg, shadow_cfg, student_cfgs, cfg, kd_cfg));
  }
  return rows;
}

std::vector<FeatureRow> dump_features(const ReferenceModel& model, const Corpus& corpus,
                                      const TriggerSeq& trigger,
                                      std::size_t target_label, TriggerPosition position) {
  std::vector<FeatureRow> rows;
  rows.reserve(corpus.test.size() * 2);
  for (const auto& ex : corpus.test) {
    rows.push_back({forward(model, ex.tokens).hidden, ex.label, false});
  }
  if (!trigger.empty()) {
    PoisonSpec spec;
    spec.trigger = trigger;
    spec.target_label = target_label;
    spec.position = position;
    Rng rng(0);
    for (const auto& ex : corpus.test) {
      if (ex.label == target_label) continue;
      const Example poisoned = poison(ex, spec, corpus.max_len, model.config.vocab_size, rng);
      rows.push_back({forward(model, poisoned.tokens).hidden, ex.label, true});
    }
  }
  return rows;
}

}  // namespace kd
}  // namespace atba
