#include "atba/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "atba/io.hpp"
#include "atba/metrics.hpp"

namespace atba {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& path) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: expected an object at '" + path + "'");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (allowed.count(key) == 0) {
      throw std::invalid_argument("config: unknown key '" +
                                  (path.empty() ? key : path + "." + key) + "'");
    }
  }
}

template <typename T>
void get_field(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception&) {
    throw std::invalid_argument("config: invalid value at '" +
                                (path.empty() ? key : path + "." + key) + "'");
  }
}

std::string position_to_string(TriggerPosition position) {
  switch (position) {
    case TriggerPosition::kPrefix: return "prefix";
    case TriggerPosition::kSuffix: return "suffix";
    case TriggerPosition::kRandom: return "random";
  }
  return "prefix";
}

TriggerPosition position_from_string(const std::string& s, const std::string& path) {
  if (s == "prefix") return TriggerPosition::kPrefix;
  if (s == "suffix") return TriggerPosition::kSuffix;
  if (s == "random") return TriggerPosition::kRandom;
  throw std::invalid_argument("config: invalid value at '" + path +
                              "' (expected prefix|suffix|random)");
}

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("config: " + what);
  };
  if (cfg.corpus.kind != "synthetic" && cfg.corpus.kind != "tsv") {
    fail("corpus.kind must be synthetic|tsv");
  }
  if (cfg.corpus.kind == "tsv" && cfg.corpus.tsv_path.empty()) {
    fail("corpus.tsv_path required for corpus.kind=tsv");
  }
  if (cfg.corpus.num_classes < 2) fail("corpus.num_classes must be >= 2");
  if (cfg.target_label >= cfg.corpus.num_classes) {
    fail("target_label must be below corpus.num_classes");
  }
  if (cfg.ttg.scoring != "mean-hidden" && cfg.ttg.scoring != "per-sample-mean") {
    fail("ttg.scoring must be mean-hidden|per-sample-mean");
  }
  const auto& a = cfg.ato;
  if (a.alpha < 0.0 || a.alpha > 1.0) fail("ato.alpha must be in [0, 1]");
  if (!(a.temp > 0.0)) fail("ato.temp must be positive");
  if (a.beta < 0.0) fail("ato.beta must be >= 0");
  if (!(a.perf_low >= 0.0 && a.perf_low < a.perf_high && a.perf_high <= 100.0)) {
    fail("ato.perf_low/perf_high must satisfy 0 <= low < high <= 100");
  }
  if (a.beam_k == 0) fail("ato.beam_k must be >= 1");
  if (a.batch_size == 0) fail("ato.batch_size must be >= 1");
  if (!(a.poison_rate > 0.0 && a.poison_rate <= 1.0)) {
    fail("ato.poison_rate must be in (0, 1]");
  }
  if (a.initial_trigger_len == 0 || a.initial_trigger_len > a.trigger_max_len) {
    fail("ato.initial_trigger_len must be in [1, ato.trigger_max_len]");
  }
  if (a.cache_capacity == 0) fail("ato.cache_capacity must be >= 1");
  const auto& k = cfg.kd;
  if (k.alpha < 0.0 || k.alpha > 1.0) fail("kd.alpha must be in [0, 1]");
  if (!(k.temp > 0.0)) fail("kd.temp must be positive");
  if (k.batch_size == 0) fail("kd.batch_size must be >= 1");
  if (cfg.teacher.embed == 0 || cfg.teacher.hidden == 0 || cfg.shadow.embed == 0 ||
      cfg.shadow.hidden == 0) {
    fail("teacher/shadow dims must be >= 1");
  }
  if (cfg.student_widths.empty()) fail("student_widths must be nonempty");
  for (std::size_t w : cfg.student_widths) {
    if (w == 0) fail("student_widths entries must be >= 1");
  }
  if (cfg.baseline_trigger_len == 0) fail("baseline_trigger_len must be >= 1");
}

std::string artifact(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void ensure_out_dir(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
}

ttg::TargetTriggerSet trigger_set_from_file(const ExperimentConfig& cfg,
                                            const Corpus& corpus) {
  const auto tokens =
      io::read_token_lines(artifact(cfg, "trigger_set.txt"), corpus.vocab);
  if (tokens.empty()) {
    throw std::runtime_error("trigger_set.txt holds no tokens; rerun the ttg stage");
  }
  ttg::TargetTriggerSet set;
  for (TokenId id : tokens) {
    ttg::TriggerCandidate cand;
    cand.token = id;
    set.kept.push_back(cand);  // file order is key order
  }
  return set;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  check_keys(j, {"seed", "out_dir", "corpus", "target_label", "ttg", "ato", "kd",
                 "teacher", "shadow", "student_widths", "baseline_trigger_len"},
             "");
  get_field(j, "seed", cfg.seed, "");
  get_field(j, "out_dir", cfg.out_dir, "");
  get_field(j, "target_label", cfg.target_label, "");
  get_field(j, "student_widths", cfg.student_widths, "");
  get_field(j, "baseline_trigger_len", cfg.baseline_trigger_len, "");

  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    check_keys(c, {"kind", "num_classes", "n_per_class", "vocab_size",
                   "signal_strength", "tsv_path", "max_len", "min_token_freq"},
               "corpus");
    get_field(c, "kind", cfg.corpus.kind, "corpus");
    get_field(c, "num_classes", cfg.corpus.num_classes, "corpus");
    get_field(c, "n_per_class", cfg.corpus.n_per_class, "corpus");
    get_field(c, "vocab_size", cfg.corpus.vocab_size, "corpus");
    get_field(c, "signal_strength", cfg.corpus.signal_strength, "corpus");
    get_field(c, "tsv_path", cfg.corpus.tsv_path, "corpus");
    get_field(c, "max_len", cfg.corpus.max_len, "corpus");
    get_field(c, "min_token_freq", cfg.corpus.min_token_freq, "corpus");
  }
  if (j.contains("ttg")) {
    const auto& t = j.at("ttg");
    check_keys(t, {"k1", "k2", "scoring"}, "ttg");
    get_field(t, "k1", cfg.ttg.k1, "ttg");
    get_field(t, "k2", cfg.ttg.k2, "ttg");
    get_field(t, "scoring", cfg.ttg.scoring, "ttg");
  }
  if (j.contains("ato")) {
    const auto& a = j.at("ato");
    check_keys(a, {"alpha", "temp", "beta", "perf_low", "perf_high", "beam_k",
                   "warmup_epochs", "ato_epochs", "finalize_epochs", "batch_size",
                   "learning_rate", "poison_rate", "position", "poison_append",
                   "initial_trigger_len", "trigger_max_len", "cache_capacity",
                   "cache_weight_perf", "cache_weight_len", "full_vocab_search"},
               "ato");
    get_field(a, "alpha", cfg.ato.alpha, "ato");
    get_field(a, "temp", cfg.ato.temp, "ato");
    get_field(a, "beta", cfg.ato.beta, "ato");
    get_field(a, "perf_low", cfg.ato.perf_low, "ato");
    get_field(a, "perf_high", cfg.ato.perf_high, "ato");
    get_field(a, "beam_k", cfg.ato.beam_k, "ato");
    get_field(a, "warmup_epochs", cfg.ato.warmup_epochs, "ato");
    get_field(a, "ato_epochs", cfg.ato.ato_epochs, "ato");
    get_field(a, "finalize_epochs", cfg.ato.finalize_epochs, "ato");
    get_field(a, "batch_size", cfg.ato.batch_size, "ato");
    get_field(a, "learning_rate", cfg.ato.learning_rate, "ato");
    get_field(a, "poison_rate", cfg.ato.poison_rate, "ato");
    if (a.contains("position")) {
      std::string pos;
      get_field(a, "position", pos, "ato");
      cfg.ato.position = position_from_string(pos, "ato.position");
    }
    get_field(a, "poison_append", cfg.ato.poison_append, "ato");
    get_field(a, "initial_trigger_len", cfg.ato.initial_trigger_len, "ato");
    get_field(a, "trigger_max_len", cfg.ato.trigger_max_len, "ato");
    get_field(a, "cache_capacity", cfg.ato.cache_capacity, "ato");
    get_field(a, "cache_weight_perf", cfg.ato.cache_weight_perf, "ato");
    get_field(a, "cache_weight_len", cfg.ato.cache_weight_len, "ato");
    get_field(a, "full_vocab_search", cfg.ato.full_vocab_search, "ato");
  }
  if (j.contains("kd")) {
    const auto& k = j.at("kd");
    check_keys(k, {"alpha", "temp", "epochs", "learning_rate", "batch_size"}, "kd");
    get_field(k, "alpha", cfg.kd.alpha, "kd");
    get_field(k, "temp", cfg.kd.temp, "kd");
    get_field(k, "epochs", cfg.kd.epochs, "kd");
    get_field(k, "learning_rate", cfg.kd.learning_rate, "kd");
    get_field(k, "batch_size", cfg.kd.batch_size, "kd");
  }
  auto parse_dims = [](const json& parent, const char* key, ExperimentConfig::Dims& out) {
    if (!parent.contains(key)) return;
    const auto& d = parent.at(key);
    check_keys(d, {"embed", "hidden"}, key);
    get_field(d, "embed", out.embed, key);
    get_field(d, "hidden", out.hidden, key);
  };
  parse_dims(j, "teacher", cfg.teacher);
  parse_dims(j, "shadow", cfg.shadow);

  cfg.ato.seed = derive_seed(cfg.seed, 401);
  cfg.kd.seed = derive_seed(cfg.seed, 501);
  validate(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  return {
      {"seed", cfg.seed},
      {"out_dir", cfg.out_dir},
      {"target_label", cfg.target_label},
      {"student_widths", cfg.student_widths},
      {"baseline_trigger_len", cfg.baseline_trigger_len},
      {"corpus",
       {{"kind", cfg.corpus.kind},
        {"num_classes", cfg.corpus.num_classes},
        {"n_per_class", cfg.corpus.n_per_class},
        {"vocab_size", cfg.corpus.vocab_size},
        {"signal_strength", cfg.corpus.signal_strength},
        {"tsv_path", cfg.corpus.tsv_path},
        {"max_len", cfg.corpus.max_len},
        {"min_token_freq", cfg.corpus.min_token_freq}}},
      {"ttg", {{"k1", cfg.ttg.k1}, {"k2", cfg.ttg.k2}, {"scoring", cfg.ttg.scoring}}},
      {"ato",
       {{"alpha", cfg.ato.alpha},
        {"temp", cfg.ato.temp},
        {"beta", cfg.ato.beta},
        {"perf_low", cfg.ato.perf_low},
        {"perf_high", cfg.ato.perf_high},
        {"beam_k", cfg.ato.beam_k},
        {"warmup_epochs", cfg.ato.warmup_epochs},
        {"ato_epochs", cfg.ato.ato_epochs},
        {"finalize_epochs", cfg.ato.finalize_epochs},
        {"batch_size", cfg.ato.batch_size},
        {"learning_rate", cfg.ato.learning_rate},
        {"poison_rate", cfg.ato.poison_rate},
        {"position", position_to_string(cfg.ato.position)},
        {"poison_append", cfg.ato.poison_append},
        {"initial_trigger_len", cfg.ato.initial_trigger_len},
        {"trigger_max_len", cfg.ato.trigger_max_len},
        {"cache_capacity", cfg.ato.cache_capacity},
        {"cache_weight_perf", cfg.ato.cache_weight_perf},
        {"cache_weight_len", cfg.ato.cache_weight_len},
        {"full_vocab_search", cfg.ato.full_vocab_search}}},
      {"kd",
       {{"alpha", cfg.kd.alpha},
        {"temp", cfg.kd.temp},
        {"epochs", cfg.kd.epochs},
        {"learning_rate", cfg.kd.learning_rate},
        {"batch_size", cfg.kd.batch_size}}},
      {"teacher", {{"embed", cfg.teacher.embed}, {"hidden", cfg.teacher.hidden}}},
      {"shadow", {{"embed", cfg.shadow.embed}, {"hidden", cfg.shadow.hidden}}},
  };
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(io::read_json_file(path));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t x = base ^ (stream * 0x9e3779b97f4a7c15ULL);
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0') << std::setw(16) << h;
  return out.str();
}

Corpus build_corpus(const ExperimentConfig& cfg) {
  Corpus corpus;
  if (cfg.corpus.kind == "synthetic") {
    corpus = synth_task(cfg.corpus.n_per_class, cfg.corpus.num_classes,
                        cfg.corpus.vocab_size, cfg.corpus.signal_strength,
                        derive_seed(cfg.seed, 1));
    corpus.max_len = cfg.corpus.max_len;
  } else {
    TsvSchema schema;
    schema.num_classes = cfg.corpus.num_classes;
    schema.target_label = cfg.target_label;
    schema.max_len = cfg.corpus.max_len;
    schema.min_token_freq = cfg.corpus.min_token_freq;
    schema.seed = derive_seed(cfg.seed, 1);
    corpus = load_tsv(cfg.corpus.tsv_path, schema);
  }
  corpus.target_label = cfg.target_label;
  return corpus;
}

ModelConfig teacher_config(const ExperimentConfig& cfg, const Corpus& corpus) {
  return {corpus.vocab.size(), cfg.teacher.embed, cfg.teacher.hidden,
          corpus.num_classes, Vocab::kPad, derive_seed(cfg.seed, 101)};
}

ModelConfig shadow_config(const ExperimentConfig& cfg, const Corpus& corpus) {
  return {corpus.vocab.size(), cfg.shadow.embed, cfg.shadow.hidden,
          corpus.num_classes, Vocab::kPad, derive_seed(cfg.seed, 202)};
}

ModelConfig student_config(const ExperimentConfig& cfg, const Corpus& corpus,
                           std::size_t width_index) {
  const std::size_t width = cfg.student_widths.at(width_index);
  return {corpus.vocab.size(), width, width, corpus.num_classes, Vocab::kPad,
          derive_seed(cfg.seed, 301 + width_index)};
}

ttg::TtgConfig ttg_config(const ExperimentConfig& cfg) {
  ttg::TtgConfig out;
  out.k1 = cfg.ttg.k1;
  out.k2 = cfg.ttg.k2;
  out.scoring = cfg.ttg.scoring == "mean-hidden" ? ttg::Scoring::kMeanHidden
                                                 : ttg::Scoring::kPerSampleMean;
  return out;
}

TtgOutputs cmd_ttg(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  const std::string hash = config_hash(cfg);
  const Corpus corpus = build_corpus(cfg);

  const std::size_t clean_epochs =
      cfg.ato.warmup_epochs + cfg.ato.ato_epochs + cfg.ato.finalize_epochs;
  const ReferenceModel clean_teacher =
      kd::train_clean_model(corpus, teacher_config(cfg, corpus), clean_epochs,
                            cfg.ato.batch_size, cfg.ato.learning_rate, cfg.ato.seed);

  const auto candidates = ttg::word_partition(corpus, cfg.target_label);
  const auto scored =
      ttg::score_candidates(clean_teacher, corpus, candidates, ttg_config(cfg).scoring);
  const auto set = ttg::filter_candidates(scored, ttg_config(cfg));

  TtgOutputs out;
  out.candidates_csv = artifact(cfg, "candidates.csv");
  out.trigger_set_file = artifact(cfg, "trigger_set.txt");
  out.clean_teacher_file = artifact(cfg, "clean_teacher.atba");
  out.manifest_file = artifact(cfg, "corpus_manifest.json");
  io::write_candidates_csv(out.candidates_csv, scored, set.tokens(), corpus.vocab,
                           hash, cfg.seed);
  io::write_token_lines(out.trigger_set_file, set.tokens(), corpus.vocab, hash, cfg.seed);
  save_model(clean_teacher, out.clean_teacher_file);
  io::write_json_file(out.manifest_file, io::corpus_manifest(corpus, hash, cfg.seed));
  return out;
}

AtoOutputs cmd_ato(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  const std::string hash = config_hash(cfg);
  const Corpus corpus = build_corpus(cfg);
  const auto set = trigger_set_from_file(cfg, corpus);

  const auto result = ato::run_ato(corpus, set, teacher_config(cfg, corpus),
                                   shadow_config(cfg, corpus), cfg.ato);

  AtoOutputs out;
  out.teacher_file = artifact(cfg, "teacher.atba");
  out.trigger_file = artifact(cfg, "trigger.txt");
  out.history_csv = artifact(cfg, "history.csv");
  out.cache_file = artifact(cfg, "cache.json");
  out.trigger = result.trigger;
  save_model(result.teacher, out.teacher_file);
  save_model(result.shadow, artifact(cfg, "shadow.atba"));
  io::write_token_lines(out.trigger_file, result.trigger, corpus.vocab, hash, cfg.seed);
  io::write_history_csv(out.history_csv, result.history, corpus.vocab, hash, cfg.seed);
  io::write_json_file(out.cache_file,
                      io::cache_to_json(result.cache, corpus.vocab, hash, cfg.seed));
  return out;
}

DistillOutputs cmd_distill(const ExperimentConfig& cfg, const std::string& teacher_path,
                           const std::string& trigger_path) {
  ensure_out_dir(cfg);
  const std::string hash = config_hash(cfg);
  const Corpus corpus = build_corpus(cfg);
  const ReferenceModel teacher = load_model(teacher_path);
  const TriggerSeq trigger = io::read_token_lines(trigger_path, corpus.vocab);

  DistillOutputs out;
  for (std::size_t i = 0; i < cfg.student_widths.size(); ++i) {
    const auto result = kd::distill_student(student_config(cfg, corpus, i), teacher,
                                            corpus, cfg.kd);
    const std::string width = std::to_string(cfg.student_widths[i]);
    const std::string model_path = artifact(cfg, "student_w" + width + ".atba");
    save_model(result.student, model_path);
    const auto report =
        kd::evaluate(result.student, corpus, trigger, cfg.target_label,
                     cfg.ato.position, kd::ModelRole::kStudent, cfg.kd.seed);
    const std::string report_path = artifact(cfg, "eval_student_w" + width + ".json");
    io::write_json_file(report_path, io::report_to_json(report, hash));
    out.student_files.push_back(model_path);
    out.report_files.push_back(report_path);
    out.reports.push_back(report);
  }
  return out;
}

kd::EvalReport cmd_evaluate(const ExperimentConfig& cfg, const std::string& model_path,
                            const std::string& trigger_path, const std::string& role,
                            const std::string& out_path) {
  ensure_out_dir(cfg);
  const Corpus corpus = build_corpus(cfg);
  const ReferenceModel model = load_model(model_path);
  const TriggerSeq trigger = io::read_token_lines(trigger_path, corpus.vocab);

  kd::ModelRole model_role = kd::ModelRole::kStudent;
  if (role == "teacher") {
    model_role = kd::ModelRole::kTeacher;
  } else if (role == "shadow") {
    model_role = kd::ModelRole::kShadow;
  } else if (role != "student") {
    throw std::invalid_argument("evaluate: role must be teacher|shadow|student");
  }
  const auto report = kd::evaluate(model, corpus, trigger, cfg.target_label,
                                   cfg.ato.position, model_role, cfg.seed);
  io::write_json_file(out_path, io::report_to_json(report, config_hash(cfg)));
  return report;
}

std::string cmd_sweep(const ExperimentConfig& cfg, const std::string& kind) {
  if (kind != "sensitivity" && kind != "poison-rate" && kind != "trigger-length") {
    throw std::invalid_argument("sweep: unknown kind '" + kind +
                                "' (expected sensitivity|poison-rate|trigger-length)");
  }
  ensure_out_dir(cfg);
  const std::string hash = config_hash(cfg);
  const Corpus corpus = build_corpus(cfg);

  if (kind == "sensitivity") {
    const ReferenceModel teacher = load_model(artifact(cfg, "teacher.atba"));
    const TriggerSeq trigger =
        io::read_token_lines(artifact(cfg, "trigger.txt"), corpus.vocab);
    const std::vector<double> alphas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    const std::vector<double> temps{1.0, 2.0, 5.0, 10.0};
    const auto cells = kd::sweep_sensitivity(corpus, teacher, trigger, alphas, temps,
                                             student_config(cfg, corpus, 0), cfg.kd);
    const std::string path = artifact(cfg, "sensitivity.csv");
    io::write_sensitivity_csv(path, cells, hash, cfg.seed);
    return path;
  }

  std::vector<ModelConfig> student_cfgs;
  for (std::size_t i = 0; i < cfg.student_widths.size(); ++i) {
    student_cfgs.push_back(student_config(cfg, corpus, i));
  }
  const auto set = trigger_set_from_file(cfg, corpus);
  if (kind == "poison-rate") {
    const std::vector<double> rates{0.01, 0.02, 0.05, 0.10};
    const auto rows =
        kd::sweep_poison_rate(corpus, set, rates, teacher_config(cfg, corpus),
                              shadow_config(cfg, corpus), student_cfgs, cfg.ato, cfg.kd);
    const std::string path = artifact(cfg, "poison_rate.csv");
    io::write_pipeline_rows_csv(path, "rate", rows, corpus.vocab, hash, cfg.seed);
    return path;
  }
  const std::vector<std::size_t> lengths{1, 2, 3, 4, 5, 6};
  const auto rows = kd::sweep_trigger_length(corpus, set, lengths,
                                             teacher_config(cfg, corpus),
                                             shadow_config(cfg, corpus), student_cfgs,
                                             cfg.ato, cfg.kd);
  const std::string path = artifact(cfg, "trigger_length.csv");
  io::write_pipeline_rows_csv(path, "length", rows, corpus.vocab, hash, cfg.seed);
  return path;
}

std::string cmd_dump_features(const ExperimentConfig& cfg, const std::string& model_path,
                              const std::string& trigger_path) {
  ensure_out_dir(cfg);
  const Corpus corpus = build_corpus(cfg);
  const ReferenceModel model = load_model(model_path);
  const TriggerSeq trigger = io::read_token_lines(trigger_path, corpus.vocab);
  const auto rows = kd::dump_features(model, corpus, trigger, cfg.target_label,
                                      cfg.ato.position);
  const std::string path = artifact(cfg, "features.csv");
  io::write_features_csv(path, rows, config_hash(cfg), cfg.seed);
  return path;
}

ReproduceSummary cmd_reproduce(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  const std::string hash = config_hash(cfg);

  const auto ttg_out = cmd_ttg(cfg);
  const auto ato_out = cmd_ato(cfg);
  const auto distill_out = cmd_distill(cfg, ato_out.teacher_file, ato_out.trigger_file);

  ReproduceSummary summary;
  summary.trigger = ato_out.trigger;
  summary.teacher = cmd_evaluate(cfg, ato_out.teacher_file, ato_out.trigger_file,
                                 "teacher", artifact(cfg, "eval_teacher.json"));
  summary.clean_teacher =
      cmd_evaluate(cfg, ttg_out.clean_teacher_file, ato_out.trigger_file, "teacher",
                   artifact(cfg, "eval_clean_teacher.json"));
  summary.shadow = cmd_evaluate(cfg, artifact(cfg, "shadow.atba"), ato_out.trigger_file,
                                "shadow", artifact(cfg, "eval_shadow.json"));
  summary.students = distill_out.reports;

  // Fixed rare-token baseline on a matched budget and matched seeds.
  const Corpus corpus = build_corpus(cfg);
  summary.baseline_trigger = kd::rare_token_trigger(corpus, cfg.baseline_trigger_len);
  const auto baseline =
      kd::baseline_attack(corpus, summary.baseline_trigger, teacher_config(cfg, corpus),
                          student_config(cfg, corpus, 0), cfg.ato, cfg.kd);
  save_model(baseline.teacher, artifact(cfg, "baseline_teacher.atba"));
  save_model(baseline.student, artifact(cfg, "baseline_student.atba"));
  io::write_token_lines(artifact(cfg, "baseline_trigger.txt"), summary.baseline_trigger,
                        corpus.vocab, hash, cfg.seed);
  io::write_json_file(artifact(cfg, "eval_baseline_teacher.json"),
                      io::report_to_json(baseline.teacher_report, hash));
  io::write_json_file(artifact(cfg, "eval_baseline_student.json"),
                      io::report_to_json(baseline.student_report, hash));
  summary.baseline_teacher = baseline.teacher_report;
  summary.baseline_student = baseline.student_report;

  nlohmann::json students = nlohmann::json::array();
  for (std::size_t i = 0; i < summary.students.size(); ++i) {
    auto j = io::report_to_json(summary.students[i], hash);
    j["width"] = cfg.student_widths[i];
    students.push_back(j);
  }
  nlohmann::json trigger_tokens = nlohmann::json::array();
  for (TokenId id : summary.trigger) trigger_tokens.push_back(corpus.vocab.token_of(id));
  nlohmann::json baseline_tokens = nlohmann::json::array();
  for (TokenId id : summary.baseline_trigger) {
    baseline_tokens.push_back(corpus.vocab.token_of(id));
  }
  const nlohmann::json summary_json = {
      {"config", hash},
      {"seed", cfg.seed},
      {"trigger", trigger_tokens},
      {"baseline_trigger", baseline_tokens},
      {"teacher", io::report_to_json(summary.teacher, hash)},
      {"clean_teacher", io::report_to_json(summary.clean_teacher, hash)},
      {"shadow", io::report_to_json(summary.shadow, hash)},
      {"students", students},
      {"baseline_teacher", io::report_to_json(summary.baseline_teacher, hash)},
      {"baseline_student", io::report_to_json(summary.baseline_student, hash)},
  };
  summary.summary_file = artifact(cfg, "summary.json");
  io::write_json_file(summary.summary_file, summary_json);

  std::vector<io::NamedReport> rows{
      {"teacher", summary.teacher},
      {"clean_teacher", summary.clean_teacher},
      {"shadow", summary.shadow},
  };
  for (std::size_t i = 0; i < summary.students.size(); ++i) {
    rows.push_back({"student_w" + std::to_string(cfg.student_widths[i]),
                    summary.students[i]});
  }
  rows.push_back({"baseline_teacher", summary.baseline_teacher});
  rows.push_back({"baseline_student", summary.baseline_student});
  io::write_reports_csv(artifact(cfg, "reports.csv"), rows, hash, cfg.seed);
  return summary;
}

std::string format_summary_table(const ExperimentConfig& cfg, const Corpus& corpus,
                                 const ReproduceSummary& summary) {
  std::ostringstream out;
  auto tokens_of = [&corpus](const TriggerSeq& trigger) {
    std::string s;
    for (std::size_t i = 0; i < trigger.size(); ++i) {
      if (i > 0) s += ' ';
      s += corpus.vocab.token_of(trigger[i]);
    }
    return s;
  };
  out << "trigger: [" << tokens_of(summary.trigger) << "]  baseline: ["
      << tokens_of(summary.baseline_trigger) << "]\n\n";
  out << std::left << std::setw(26) << "model" << std::right << std::setw(8) << "CACC"
      << std::setw(8) << "ASR" << "\n";
  auto row = [&out](const std::string& name, const kd::EvalReport& r) {
    out << std::left << std::setw(26) << name << std::right << std::setw(8)
        << std::fixed << std::setprecision(3) << r.cacc << std::setw(8) << r.asr
        << "\n";
  };
  row("teacher (poisoned)", summary.teacher);
  row("teacher (clean ref)", summary.clean_teacher);
  row("shadow", summary.shadow);
  for (std::size_t i = 0; i < summary.students.size(); ++i) {
    row("student w" + std::to_string(cfg.student_widths[i]), summary.students[i]);
  }
  row("baseline teacher", summary.baseline_teacher);
  row("baseline student", summary.baseline_student);
  return out.str();
}

}  // namespace atba
