#pragma once

#include <stdexcept>
#include <vector>

#include "atba/data.hpp"
#include "atba/model.hpp"

namespace atba {
namespace ttg {

struct TriggerCandidate {
  TokenId token = 0;
  double s_target = 0.0;     // cosine similarity toward target representations
  double s_nontarget = 0.0;  // cosine similarity toward non-target representations
  std::size_t freq_target = 0;

  // Sort key: high = strongly target-revealing, low = weakly indicative.
  double key() const { return s_target - s_nontarget; }
};

enum class Scoring {
  kMeanHidden,     // cosine against the mean hidden state of each side
  kPerSampleMean,  // mean of per-sample cosines
};

struct TtgConfig {
  std::size_t k1 = 0;  // drop from the top (too explicit, stealth-poor)
  std::size_t k2 = 0;  // drop from the bottom (weakly indicative)
  Scoring scoring = Scoring::kMeanHidden;
};

struct EmptyCandidateSetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tokens occurring in target-label training examples and in no non-target
// training example, ascending id. Throws EmptyCandidateSetError when the
// difference set is empty (relax the vocabulary min-frequency and retry).
std::vector<TokenId> word_partition(const Corpus& corpus, std::size_t target_label);

// Scores each candidate's single-token hidden state against target and
// non-target training representations of a clean-trained model.
std::vector<TriggerCandidate> score_candidates(const ReferenceModel& model,
                                               const Corpus& corpus,
                                               const std::vector<TokenId>& candidates,
                                               Scoring scoring);

// The reserved trigger set, sorted by key descending (ties by ascending id).
struct TargetTriggerSet {
  std::vector<TriggerCandidate> kept;

  std::vector<TokenId> tokens() const {
    std::vector<TokenId> out;
    out.reserve(kept.size());
    for (const auto& c : kept) out.push_back(c.token);
    return out;
  }
};

// Sorts by key descending and reserves the middle N - k1 - k2 candidates:
// the first k1 are too explicit, the last k2 too weakly correlated.
TargetTriggerSet filter_candidates(std::vector<TriggerCandidate> scored,
                                   const TtgConfig& config);

}  // namespace ttg
}  // namespace atba
