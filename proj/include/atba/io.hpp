#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "atba/ato.hpp"
#include "atba/data.hpp"
#include "atba/distill.hpp"
#include "atba/ttg.hpp"

namespace atba {
namespace io {

// Shortest exact decimal representation; round-trips bit-exactly.
std::string fmt_double(double value);

// Token-per-line text file headed by "# config=<hash> seed=<seed>".
void write_token_lines(const std::string& path, const std::vector<TokenId>& tokens,
                       const Vocab& vocab, const std::string& config_hash,
                       std::uint64_t seed);
// Reads one back; unknown tokens are an error, comment lines are skipped.
std::vector<TokenId> read_token_lines(const std::string& path, const Vocab& vocab);

// Scored-candidates table (kept flag marks the reserved trigger set).
void write_candidates_csv(const std::string& path,
                          const std::vector<ttg::TriggerCandidate>& scored,
                          const std::vector<TokenId>& kept, const Vocab& vocab,
                          const std::string& config_hash, std::uint64_t seed);

void write_history_csv(const std::string& path,
                       const std::vector<ato::HistoryRow>& history, const Vocab& vocab,
                       const std::string& config_hash, std::uint64_t seed);

nlohmann::json cache_to_json(const ato::CacheList& cache, const Vocab& vocab,
                             const std::string& config_hash, std::uint64_t seed);

nlohmann::json report_to_json(const kd::EvalReport& report, const std::string& config_hash);
kd::EvalReport report_from_json(const nlohmann::json& j);

nlohmann::json corpus_manifest(const Corpus& corpus, const std::string& config_hash,
                               std::uint64_t seed);

void write_features_csv(const std::string& path, const std::vector<kd::FeatureRow>& rows,
                        const std::string& config_hash, std::uint64_t seed);

void write_sensitivity_csv(const std::string& path, const std::vector<kd::SweepCell>& cells,
                           const std::string& config_hash, std::uint64_t seed);

// Flat report table: one row per evaluated model.
struct NamedReport {
  std::string name;
  kd::EvalReport report;
};
void write_reports_csv(const std::string& path, const std::vector<NamedReport>& rows,
                       const std::string& config_hash, std::uint64_t seed);

void write_pipeline_rows_csv(const std::string& path, const char* parameter_name,
                             const std::vector<kd::PipelineRow>& rows, const Vocab& vocab,
                             const std::string& config_hash, std::uint64_t seed);

void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

}  // namespace io
}  // namespace atba
