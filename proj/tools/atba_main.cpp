// atba: experiment pipeline CLI. Stages consume prior-stage artifacts by
// path and every run is fully determined by (config, seed).

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atba/experiment.hpp"
#include "atba/io.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, dotted paths
  std::int64_t seed = -1;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config JSON")->required();
  cmd->add_option("--seed", opts.seed, "override the global seed");
  cmd->add_option("--out", opts.out_dir, "override the output directory");
  cmd->add_option("--set", opts.overrides,
                  "override a config key, e.g. --set ato.alpha=0.5");
}

void apply_override(nlohmann::json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("--set expects key=value, got '" + spec + "'");
  }
  const std::string key = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);

  nlohmann::json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw std::invalid_argument("--set: empty path segment in '" + key + "'");
    if (dot == std::string::npos) {
      try {
        (*node)[part] = nlohmann::json::parse(value);
      } catch (const nlohmann::json::exception&) {
        (*node)[part] = value;  // bare strings need no quotes
      }
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

atba::ExperimentConfig resolve_config(const CommonOpts& opts) {
  nlohmann::json j = atba::io::read_json_file(opts.config_path);
  for (const auto& spec : opts.overrides) apply_override(j, spec);
  if (opts.seed >= 0) j["seed"] = static_cast<std::uint64_t>(opts.seed);
  if (!opts.out_dir.empty()) j["out_dir"] = opts.out_dir;
  return atba::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ATBA micro-lab: trigger generation, adaptive optimization, "
               "distillation, and evaluation"};
  app.require_subcommand(1);

  CommonOpts ttg_opts;
  auto* ttg_cmd = app.add_subcommand("ttg", "generate and filter the target trigger set");
  add_common(ttg_cmd, ttg_opts);

  CommonOpts ato_opts;
  auto* ato_cmd = app.add_subcommand(
      "ato", "optimize the trigger and poison the teacher (needs ttg artifacts)");
  add_common(ato_cmd, ato_opts);

  CommonOpts distill_opts;
  std::string distill_teacher, distill_trigger;
  auto* distill_cmd =
      app.add_subcommand("distill", "distill students from a teacher on clean data");
  add_common(distill_cmd, distill_opts);
  distill_cmd->add_option("--teacher", distill_teacher, "teacher model file")->required();
  distill_cmd->add_option("--trigger", distill_trigger, "trigger file for evaluation")
      ->required();

  CommonOpts eval_opts;
  std::string eval_model, eval_trigger, eval_role = "student", eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "report CACC and ASR for a model");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--trigger", eval_trigger, "trigger file")->required();
  eval_cmd->add_option("--role", eval_role, "teacher|shadow|student");
  eval_cmd->add_option("--report", eval_out, "report output path");

  CommonOpts sweep_opts;
  std::string sweep_kind;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a report-matrix sweep");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--kind", sweep_kind, "sensitivity|poison-rate|trigger-length")
      ->required();

  CommonOpts feat_opts;
  std::string feat_model, feat_trigger;
  auto* feat_cmd = app.add_subcommand(
      "dump-features", "write test-split hidden features for external projection");
  add_common(feat_cmd, feat_opts);
  feat_cmd->add_option("--model", feat_model, "model file")->required();
  feat_cmd->add_option("--trigger", feat_trigger, "trigger file")->required();

  CommonOpts repro_opts;
  auto* repro_cmd = app.add_subcommand(
      "reproduce", "full pipeline: ttg, ato, distill, evaluate, baseline");
  add_common(repro_cmd, repro_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ttg_cmd) {
      const auto cfg = resolve_config(ttg_opts);
      const auto out = atba::cmd_ttg(cfg);
      std::cout << "wrote " << out.candidates_csv << "\n"
                << "wrote " << out.trigger_set_file << "\n"
                << "wrote " << out.clean_teacher_file << "\n"
                << "wrote " << out.manifest_file << "\n";
    } else if (*ato_cmd) {
      const auto cfg = resolve_config(ato_opts);
      const auto out = atba::cmd_ato(cfg);
      std::cout << "wrote " << out.teacher_file << "\n"
                << "wrote " << out.trigger_file << "\n"
                << "wrote " << out.history_csv << "\n"
                << "wrote " << out.cache_file << "\n";
    } else if (*distill_cmd) {
      const auto cfg = resolve_config(distill_opts);
      const auto out = atba::cmd_distill(cfg, distill_teacher, distill_trigger);
      for (const auto& f : out.student_files) std::cout << "wrote " << f << "\n";
      for (const auto& f : out.report_files) std::cout << "wrote " << f << "\n";
    } else if (*eval_cmd) {
      const auto cfg = resolve_config(eval_opts);
      std::string out_path = eval_out;
      if (out_path.empty()) out_path = cfg.out_dir + "/eval.json";
      const auto report = atba::cmd_evaluate(cfg, eval_model, eval_trigger, eval_role,
                                             out_path);
      std::cout << atba::io::report_to_json(report, atba::config_hash(cfg)).dump(2)
                << "\n";
    } else if (*sweep_cmd) {
      const auto cfg = resolve_config(sweep_opts);
      std::cout << "wrote " << atba::cmd_sweep(cfg, sweep_kind) << "\n";
    } else if (*feat_cmd) {
      const auto cfg = resolve_config(feat_opts);
      std::cout << "wrote " << atba::cmd_dump_features(cfg, feat_model, feat_trigger)
                << "\n";
    } else if (*repro_cmd) {
      const auto cfg = resolve_config(repro_opts);
      const auto summary = atba::cmd_reproduce(cfg);
      const auto corpus = atba::build_corpus(cfg);
      std::cout << atba::format_summary_table(cfg, corpus, summary);
      std::cout << "wrote " << summary.summary_file << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
