#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atba/ato.hpp"
#include "atba/data.hpp"
#include "atba/model.hpp"

namespace atba {
namespace kd {

struct KdConfig {
  double alpha = 0.8;  // teacher contribution (0 = label-only, 1 = pure KD)
  double temp = 1.0;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

enum class ModelRole { kTeacher, kShadow, kStudent };
const char* role_name(ModelRole role);

struct EvalReport {
  double cacc = 0.0;
  double asr = 0.0;
  std::size_t n_clean = 0;
  std::size_t n_poisoned = 0;
  std::uint64_t seed = 0;
  ModelRole role = ModelRole::kStudent;
};

// Clean CE training with the same per-epoch data order as the attack-side
// trainers, so clean and poisoned teachers are comparable run-for-run.
ReferenceModel train_clean_model(const Corpus& corpus, const ModelConfig& model_cfg,
                                 std::size_t epochs, std::size_t batch_size,
                                 double learning_rate, std::uint64_t seed);

struct DistillResult {
  ReferenceModel student;
  std::size_t poisoned_seen = 0;  // instrumentation: must stay 0 under clean-tuning
};

// Victim-side distillation: clean train split only, per-batch KD steps
// against the frozen teacher. No poisoned example ever touches the student.
DistillResult distill_student(const ModelConfig& student_cfg,
                              const ReferenceModel& teacher, const Corpus& corpus,
                              const KdConfig& cfg);

// CACC on the clean test split; ASR on poisoned copies of every
// non-target-label test example.
EvalReport evaluate(const ReferenceModel& model, const Corpus& corpus,
                    const TriggerSeq& trigger, std::size_t target_label,
                    TriggerPosition position, ModelRole role, std::uint64_t seed);

// Fixed trigger for the baseline attack: rare tokens from the vocabulary
// tail that also occur in at least one non-target train example (a
// traditional target-agnostic rare-word trigger).
TriggerSeq rare_token_trigger(const Corpus& corpus, std::size_t len);

struct BaselineResult {
  ReferenceModel teacher;
  ReferenceModel student;
  EvalReport teacher_report;
  EvalReport student_report;
  TriggerSeq trigger;
};

// Fixed-trigger attack with no trigger optimization: poison the teacher with
// the given trigger on a matched training budget, then distill a student on
// clean data and report both.
BaselineResult baseline_attack(const Corpus& corpus, const TriggerSeq& fixed_trigger,
                               const ModelConfig& teacher_cfg,
                               const ModelConfig& student_cfg,
                               const ato::AtoConfig& inject_cfg, const KdConfig& kd_cfg);

struct SweepCell {
  double alpha = 0.0;
  double temp = 0.0;
  EvalReport report;
};

// One student per (alpha, temp) cell from a fixed poisoned teacher, same
// student seed in every cell.
std::vector<SweepCell> sweep_sensitivity(const Corpus& corpus,
                                         const ReferenceModel& teacher,
                                         const TriggerSeq& trigger,
                                         const std::vector<double>& alphas,
                                         const std::vector<double>& temps,
                                         const ModelConfig& student_cfg,
                                         const KdConfig& base_kd);

struct PipelineRow {
  double parameter = 0.0;  // the swept value (rate or length)
  TriggerSeq trigger;
  EvalReport teacher_report;
  std::vector<EvalReport> student_reports;
};

// Full attack pipeline (shared TTG set) per poisoning rate.
std::vector<PipelineRow> sweep_poison_rate(const Corpus& corpus,
                                           const ttg::TargetTriggerSet& trigger_set,
                                           const std::vector<double>& rates,
                                           const ModelConfig& teacher_cfg,
                                           const ModelConfig& shadow_cfg,
                                           const std::vector<ModelConfig>& student_cfgs,
                                           const ato::AtoConfig& base_ato,
                                           const KdConfig& kd_cfg);

// Full attack pipeline per forced trigger length (length adaptation pinned).
std::vector<PipelineRow> sweep_trigger_length(const Corpus& corpus,
                                              const ttg::TargetTriggerSet& trigger_set,
                                              const std::vector<std::size_t>& lengths,
                                              const ModelConfig& teacher_cfg,
                                              const ModelConfig& shadow_cfg,
                                              const std::vector<ModelConfig>& student_cfgs,
                                              const ato::AtoConfig& base_ato,
                                              const KdConfig& kd_cfg);

struct FeatureRow {
  Vec hidden;
  std::size_t label = 0;
  bool poisoned = false;
};

// Hidden representations of the clean test split plus poisoned copies of its
// non-target examples, for external 2-D projection.
std::vector<FeatureRow> dump_features(const ReferenceModel& model, const Corpus& corpus,
                                      const TriggerSeq& trigger,
                                      std::size_t target_label, TriggerPosition position);

}  // namespace kd
}  // namespace atba
