#include "atba/ttg.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace atba {
namespace ttg {

std::vector<TokenId> word_partition(const Corpus& corpus, std::size_t target_label) {
  bool has_target = false;
  bool has_nontarget = false;
  std::set<TokenId> in_target;
  std::set<TokenId> in_nontarget;
  for (const auto& ex : corpus.train) {
    if (ex.label == target_label) {
      has_target = true;
      in_target.insert(ex.tokens.begin(), ex.tokens.end());
    } else {
      has_nontarget = true;
      in_nontarget.insert(ex.tokens.begin(), ex.tokens.end());
    }
  }
  if (!has_target || !has_nontarget) {
    throw std::invalid_argument(
        "word_partition: train split needs both target and non-target examples");
  }
  std::vector<TokenId> diff;
  for (TokenId id : in_target) {
    if (in_nontarget.count(id) == 0) diff.push_back(id);
  }
  if (diff.empty()) {
    throw EmptyCandidateSetError(
        "word_partition: no token is exclusive to the target label; relax the "
        "vocabulary min-frequency threshold");
  }
  return diff;  // std::set iteration is already ascending
}

std::vector<TriggerCandidate> score_candidates(const ReferenceModel& model,
                                               const Corpus& corpus,
                                               const std::vector<TokenId>& candidates,
                                               Scoring scoring) {
  if (!model.finite()) {
    throw std::invalid_argument("score_candidates: model has non-finite parameters");
  }

  std::vector<Vec> target_hidden;
  std::vector<Vec> nontarget_hidden;
  std::vector<std::size_t> target_freq(corpus.vocab.size(), 0);
  for (const auto& ex : corpus.train) {
    Vec h = forward(model, ex.tokens).hidden;
    if (ex.label == corpus.target_label) {
      target_hidden.push_back(std::move(h));
      for (TokenId id : ex.tokens) ++target_freq[static_cast<std::size_t>(id)];
    } else {
      nontarget_hidden.push_back(std::move(h));
    }
  }
  if (target_hidden.empty() || nontarget_hidden.empty()) {
    throw std::invalid_argument(
        "score_candidates: train split needs both target and non-target examples");
  }

  auto mean_of = [](const std::vector<Vec>& vs) {
    Vec mean(vs.front().size(), 0.0);
    for (const auto& v : vs) add_inplace(mean, v);
    for (double& x : mean) x /= static_cast<double>(vs.size());
    return mean;
  };
  const Vec mean_target = mean_of(target_hidden);
  const Vec mean_nontarget = mean_of(nontarget_hidden);

  std::vector<TriggerCandidate> scored;
  scored.reserve(candidates.size());
  for (TokenId token : candidates) {
    const Vec h = forward(model, TokenSeq{token}).hidden;
    TriggerCandidate cand;
    cand.token = token;
    cand.freq_target = target_freq[static_cast<std::size_t>(token)];
    if (scoring == Scoring::kMeanHidden) {
      cand.s_target = cosine(h, mean_target);
      cand.s_nontarget = cosine(h, mean_nontarget);
    } else {
      double s_t = 0.0;
      for (const auto& hx : target_hidden) s_t += cosine(h, hx);
      double s_n = 0.0;
      for (const auto& hx : nontarget_hidden) s_n += cosine(h, hx);
      cand.s_target = s_t / static_cast<double>(target_hidden.size());
      cand.s_nontarget = s_n / static_cast<double>(nontarget_hidden.size());
    }
    scored.push_back(cand);
  }
  return scored;
}

TargetTriggerSet filter_candidates(std::vector<TriggerCandidate> scored,
                                   const TtgConfig& config) {
  if (config.k1 + config.k2 >= scored.size()) {
    throw std::invalid_argument("filter_candidates: k1 + k2 = " +
                                std::to_string(config.k1 + config.k2) +
                                " must be below the candidate count " +
                                std::to_string(scored.size()));
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const TriggerCandidate& a, const TriggerCandidate& b) {
                     if (a.key() != b.key()) return a.key() > b.key();
                     return a.token < b.token;
                   });
  TargetTriggerSet set;
  set.kept.assign(scored.begin() + static_cast<std::ptrdiff_t>(config.k1),
                  scored.end() - static_cast<std::ptrdiff_t>(config.k2));
  return set;
}

}  // namespace ttg
}  // namespace atba
