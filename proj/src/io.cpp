#include "atba/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace atba {
namespace io {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

std::string header_comment(const std::string& config_hash, std::uint64_t seed) {
  return "# config=" + config_hash + " seed=" + std::to_string(seed);
}

std::string join_tokens(const TriggerSeq& trigger, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < trigger.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token_of(trigger[i]);
  }
  return out;
}

}  // namespace

std::string fmt_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_token_lines(const std::string& path, const std::vector<TokenId>& tokens,
                       const Vocab& vocab, const std::string& config_hash,
                       std::uint64_t seed) {
  auto out = open_out(path);
  out << header_comment(config_hash, seed) << "\n";
  for (TokenId id : tokens) out << vocab.token_of(id) << "\n";
}

std::vector<TokenId> read_token_lines(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing artifact: " + path);
  std::vector<TokenId> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!vocab.contains(line)) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": token '" + line + "' not in vocabulary");
    }
    tokens.push_back(vocab.id_of(line));
  }
  return tokens;
}

void write_candidates_csv(const std::string& path,
                          const std::vector<ttg::TriggerCandidate>& scored,
                          const std::vector<TokenId>& kept, const Vocab& vocab,
                          const std::string& config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << header_comment(config_hash, seed) << "\n";
  out << "token,token_id,s_target,s_nontarget,key,freq_target,kept\n";
  for (const auto& cand : scored) {
    const bool is_kept =
        std::find(kept.begin(), kept.end(), cand.token) != kept.end();
    out << vocab.token_of(cand.token) << ',' << cand.token << ','
        << fmt_double(cand.s_target) << ',' << fmt_double(cand.s_nontarget) << ','
        << fmt_double(cand.key()) << ',' << cand.freq_target << ','
        << (is_kept ? 1 : 0) << "\n";
  }
}

void write_history_csv(const std::string& path,
                       const std::vector<ato::HistoryRow>& history, const Vocab& vocab,
                       const std::string& config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << header_comment(config_hash, seed) << "\n";
  out << "epoch,trigger,length,perf,shadow_cacc,teacher_clean_loss,teacher_poison_loss\n";
  for (const auto& row : history) {
    out << row.epoch << ",\"" << join_tokens(row.trigger, vocab) << "\","
        << row.trigger.size() << ',' << fmt_double(row.perf) << ','
        << fmt_double(row.shadow_cacc) << ',' << fmt_double(row.teacher_clean_loss)
        << ',' << fmt_double(row.teacher_poison_loss) << "\n";
  }
}

nlohmann::json cache_to_json(const ato::CacheList& cache, const Vocab& vocab,
                             const std::string& config_hash, std::uint64_t seed) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& entry : cache.entries()) {
    nlohmann::json tokens = nlohmann::json::array();
    for (TokenId id : entry.trigger) tokens.push_back(vocab.token_of(id));
    entries.push_back({{"trigger", tokens},
                       {"perf", entry.perf},
                       {"length", entry.length()},
                       {"key", cache.key(entry)}});
  }
  return {{"config", config_hash},
          {"seed", seed},
          {"capacity", cache.capacity()},
          {"weight_perf", cache.weight_perf()},
          {"weight_len", cache.weight_len()},
          {"entries", entries}};
}

nlohmann::json report_to_json(const kd::EvalReport& report, const std::string& config_hash) {
  return {{"config", config_hash},
          {"role", kd::role_name(report.role)},
          {"cacc", report.cacc},
          {"asr", report.asr},
          {"n_clean", report.n_clean},
          {"n_poisoned", report.n_poisoned},
          {"seed", report.seed}};
}

kd::EvalReport report_from_json(const nlohmann::json& j) {
  kd::EvalReport report;
  report.cacc = j.at("cacc").get<double>();
  report.asr = j.at("asr").get<double>();
  report.n_clean = j.at("n_clean").get<std::size_t>();
  report.n_poisoned = j.at("n_poisoned").get<std::size_t>();
  report.seed = j.at("seed").get<std::uint64_t>();
  const std::string role = j.at("role").get<std::string>();
  if (role == "teacher") {
    report.role = kd::ModelRole::kTeacher;
  } else if (role == "shadow") {
    report.role = kd::ModelRole::kShadow;
  } else if (role == "student") {
    report.role = kd::ModelRole::kStudent;
  } else {
    throw std::runtime_error("report_from_json: unknown role '" + role + "'");
  }
  return report;
}

nlohmann::json corpus_manifest(const Corpus& corpus, const std::string& config_hash,
                               std::uint64_t seed) {
  auto split_json = [](const std::vector<Example>& split) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& ex : split) {
      out.push_back({{"tokens", ex.tokens}, {"label", ex.label}, {"poisoned", ex.poisoned}});
    }
    return out;
  };
  return {{"config", config_hash},
          {"seed", seed},
          {"num_classes", corpus.num_classes},
          {"target_label", corpus.target_label},
          {"max_len", corpus.max_len},
          {"vocab", corpus.vocab.id_to_token},
          {"train", split_json(corpus.train)},
          {"val", split_json(corpus.val)},
          {"test", split_json(corpus.test)}};
}

void write_features_csv(const std::string& path, const std::vector<kd::FeatureRow>& rows,
                        const std::string& config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << header_comment(config_hash, seed) << "\n";
  if (rows.empty()) return;
  for (std::size_t j = 0; j < rows.front().hidden.size(); ++j) out << 'h' << j << ',';
  out << "label,poisoned\n";
  for (const auto& row : rows) {
    for (double h : row.hidden) out << fmt_double(h) << ',';
    out << row.label << ',' << (row.poisoned ? 1 : 0) << "\n";
  }
}

void write_sensitivity_csv(const std::string& path, const std::vector<kd::SweepCell>& cells,
                           const std::string& config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << header_comment(config_hash, seed) << "\n";
  out << "alpha,temp,cacc,asr,n_clean,n_poisoned\n";
  for (const auto& cell : cells) {
    out << fmt_double(cell.alpha) << ',' << fmt_double(cell.temp) << ','
        << fmt_double(cell.report.cacc) << ',' << fmt_double(cell.report.asr) << ','
        << cell.report.n_clean << ',' << cell.report.n_poisoned << "\n";
  }
}

void write_reports_csv(const std::string& path, const std::vector<NamedReport>& rows,
                       const std::string& config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << header_comment(config_hash, seed) << "\n";
  out << "model,role,cacc,asr,n_clean,n_poisoned,seed\n";
  for (const auto& row : rows) {
    out << row.name << ',' << kd::role_name(row.report.role) << ','
        << fmt_double(row.report.cacc) << ',' << fmt_double(row.report.asr) << ','
        << row.report.n_clean << ',' << row.report.n_poisoned << ','
        << row.report.seed << "\n";
  }
}

void write_pipeline_rows_csv(const std::string& path, const char* parameter_name,
                             const std::vector<kd::PipelineRow>& rows, const Vocab& vocab,
                             const std::string& config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << header_comment(config_hash, seed) << "\n";
  out << parameter_name << ",role,model_index,trigger,cacc,asr\n";
  for (const auto& row : rows) {
    const std::string trig = join_tokens(row.trigger, vocab);
    out << fmt_double(row.parameter) << ",teacher,0,\"" << trig << "\","
        << fmt_double(row.teacher_report.cacc) << ','
        << fmt_double(row.teacher_report.asr) << "\n";
    for (std::size_t i = 0; i < row.student_reports.size(); ++i) {
      const auto& r = row.student_reports[i];
      out << fmt_double(row.parameter) << ",student," << i << ",\"" << trig << "\","
          << fmt_double(r.cacc) << ',' << fmt_double(r.asr) << "\n";
    }
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing artifact: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace io
}  // namespace atba
