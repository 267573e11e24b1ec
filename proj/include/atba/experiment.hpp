#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "atba/ato.hpp"
#include "atba/data.hpp"
#include "atba/distill.hpp"
#include "atba/ttg.hpp"

namespace atba {

// One audited document holding every knob of the pipeline. Unknown keys are
// rejected with their field path; flags may override individual keys.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  struct CorpusCfg {
    std::string kind = "synthetic";  // "synthetic" | "tsv"
    std::size_t num_classes = 4;
    std::size_t n_per_class = 500;
    std::size_t vocab_size = 200;
    double signal_strength = 0.5;
    std::string tsv_path;
    std::size_t max_len = 128;
    std::size_t min_token_freq = 1;
  } corpus;

  std::size_t target_label = 0;

  struct TtgCfg {
    std::size_t k1 = 4;
    std::size_t k2 = 4;
    std::string scoring = "mean-hidden";  // "mean-hidden" | "per-sample-mean"
  } ttg;

  ato::AtoConfig ato;  // seed is derived from the global seed
  kd::KdConfig kd;

  struct Dims {
    std::size_t embed = 0;
    std::size_t hidden = 0;
  };
  Dims teacher{64, 64};
  Dims shadow{32, 32};
  std::vector<std::size_t> student_widths{16, 24, 32};
  std::size_t baseline_trigger_len = 2;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// FNV-1a 64 over the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// Deterministic sub-seed for a named pipeline stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

Corpus build_corpus(const ExperimentConfig& cfg);

ModelConfig teacher_config(const ExperimentConfig& cfg, const Corpus& corpus);
ModelConfig shadow_config(const ExperimentConfig& cfg, const Corpus& corpus);
ModelConfig student_config(const ExperimentConfig& cfg, const Corpus& corpus,
                           std::size_t width_index);
ttg::TtgConfig ttg_config(const ExperimentConfig& cfg);

// Stage commands. Each one re-derives the corpus from the config, consumes
// prior-stage artifacts by path, and writes its outputs under out_dir; every
// text artifact embeds the config hash and seed.
struct TtgOutputs {
  std::string candidates_csv;
  std::string trigger_set_file;
  std::string clean_teacher_file;
  std::string manifest_file;
};
TtgOutputs cmd_ttg(const ExperimentConfig& cfg);

struct AtoOutputs {
  std::string teacher_file;
  std::string trigger_file;
  std::string history_csv;
  std::string cache_file;
  TriggerSeq trigger;
};
AtoOutputs cmd_ato(const ExperimentConfig& cfg);

struct DistillOutputs {
  std::vector<std::string> student_files;
  std::vector<std::string> report_files;
  std::vector<kd::EvalReport> reports;
};
DistillOutputs cmd_distill(const ExperimentConfig& cfg, const std::string& teacher_path,
                           const std::string& trigger_path);

kd::EvalReport cmd_evaluate(const ExperimentConfig& cfg, const std::string& model_path,
                            const std::string& trigger_path, const std::string& role,
                            const std::string& out_path);

// kind: "sensitivity" (needs teacher + trigger artifacts), "poison-rate",
// or "trigger-length" (both need the trigger-set artifact).
std::string cmd_sweep(const ExperimentConfig& cfg, const std::string& kind);

std::string cmd_dump_features(const ExperimentConfig& cfg, const std::string& model_path,
                              const std::string& trigger_path);

struct ReproduceSummary {
  TriggerSeq trigger;
  TriggerSeq baseline_trigger;
  kd::EvalReport teacher;
  kd::EvalReport clean_teacher;
  kd::EvalReport shadow;
  std::vector<kd::EvalReport> students;           // one per configured width
  kd::EvalReport baseline_teacher;
  kd::EvalReport baseline_student;
  std::string summary_file;
};

// Full pipeline: TTG -> ATO -> distill -> evaluate -> fixed-trigger baseline,
// composed from the stage commands above, plus a summary table.
ReproduceSummary cmd_reproduce(const ExperimentConfig& cfg);

std::string format_summary_table(const ExperimentConfig& cfg, const Corpus& corpus,
                                 const ReproduceSummary& summary);

}  // namespace atba
