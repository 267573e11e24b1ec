#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "atba/ttg.hpp"

using namespace atba;
using ttg::TriggerCandidate;

namespace {

Corpus corpus_from_docs(const std::vector<std::pair<std::string, std::size_t>>& docs,
                        std::size_t num_classes, std::size_t target) {
  std::vector<std::vector<std::string>> token_docs;
  for (const auto& [text, label] : docs) {
    (void)label;
    token_docs.push_back(tokenize(text));
  }
  Corpus corpus;
  corpus.vocab = build_vocab(token_docs, 1);
  corpus.num_classes = num_classes;
  corpus.target_label = target;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Example ex;
    ex.label = docs[i].second;
    for (const auto& token : token_docs[i]) ex.tokens.push_back(corpus.vocab.id_of(token));
    corpus.train.push_back(ex);
  }
  return corpus;
}

// d = h model with identity first layer: hidden = tanh(pooled).
ReferenceModel passthrough_model(std::size_t vocab_size, std::size_t dim) {
  ReferenceModel m = init_model({vocab_size, dim, dim, 2, 0, 1});
  m.w1 = Matrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) m.w1.at(i, i) = 1.0;
  std::fill(m.b1.begin(), m.b1.end(), 0.0);
  return m;
}

}  // namespace

TEST_CASE("word_partition takes the target-exclusive difference set") {
  const Corpus corpus = corpus_from_docs({{"good movie", 1}, {"bad movie", 0}}, 2, 1);
  const auto diff = ttg::word_partition(corpus, 1);
  REQUIRE(diff.size() == 1);
  CHECK(corpus.vocab.token_of(diff[0]) == "good");
}

TEST_CASE("word_partition excludes tokens seen on both sides and errors when empty") {
  const Corpus shared = corpus_from_docs(
      {{"alpha beta", 1}, {"alpha gamma", 1}, {"beta gamma", 0}}, 2, 1);
  const auto diff = ttg::word_partition(shared, 1);
  REQUIRE(diff.size() == 1);
  CHECK(shared.vocab.token_of(diff[0]) == "alpha");

  const Corpus identical = corpus_from_docs({{"same words", 1}, {"same words", 0}}, 2, 1);
  CHECK_THROWS_AS(ttg::word_partition(identical, 1), ttg::EmptyCandidateSetError);

  const Corpus onesided = corpus_from_docs({{"only target", 1}}, 2, 1);
  CHECK_THROWS_AS(ttg::word_partition(onesided, 1), std::invalid_argument);
}

TEST_CASE("score_candidates is exact on hand-built geometry") {
  // Tokens a, b, c with axis-aligned embeddings; hidden = tanh(pooled) keeps
  // the axes, so cosines are exactly 1 or 0.
  const Corpus corpus = corpus_from_docs({{"a", 1}, {"b", 0}}, 2, 1);
  const TokenId a = corpus.vocab.id_of("a");
  const TokenId b = corpus.vocab.id_of("b");

  ReferenceModel m = passthrough_model(corpus.vocab.size(), 3);
  std::fill(m.embed.data.begin(), m.embed.data.end(), 0.0);
  m.embed.at(static_cast<std::size_t>(a), 0) = 0.5;
  m.embed.at(static_cast<std::size_t>(b), 1) = 0.5;

  // Self-similarity: the candidate IS the only target example.
  auto scored = ttg::score_candidates(m, corpus, {a}, ttg::Scoring::kMeanHidden);
  REQUIRE(scored.size() == 1);
  CHECK(scored[0].s_target == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scored[0].s_nontarget == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(scored[0].freq_target == 1);

  // A third axis is orthogonal to both sides.
  Corpus with_c = corpus_from_docs({{"a", 1}, {"b", 0}, {"a c", 1}}, 2, 1);
  with_c.train.pop_back();  // only used to get c into the vocab
  const TokenId c = with_c.vocab.id_of("c");
  ReferenceModel m3 = passthrough_model(with_c.vocab.size(), 3);
  std::fill(m3.embed.data.begin(), m3.embed.data.end(), 0.0);
  m3.embed.at(static_cast<std::size_t>(with_c.vocab.id_of("a")), 0) = 0.5;
  m3.embed.at(static_cast<std::size_t>(with_c.vocab.id_of("b")), 1) = 0.5;
  m3.embed.at(static_cast<std::size_t>(c), 2) = 0.5;
  auto orth = ttg::score_candidates(m3, with_c, {c}, ttg::Scoring::kMeanHidden);
  REQUIRE(orth.size() == 1);
  CHECK(orth[0].s_target == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(orth[0].s_nontarget == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("score_candidates matches a per-example brute-force oracle") {
  const Corpus corpus = corpus_from_docs(
      {
          {"great fun ride", 1},
          {"great cast charming", 1},
          {"joyful charming fun", 1},
          {"boring dull slog", 0},
          {"tedious dull mess", 0},
      },
      2, 1);
  const ReferenceModel m = init_model({corpus.vocab.size(), 6, 5, 2, 0, 42});
  const auto candidates = ttg::word_partition(corpus, 1);
  REQUIRE(candidates.size() > 2);

  for (auto mode : {ttg::Scoring::kMeanHidden, ttg::Scoring::kPerSampleMean}) {
    const auto scored = ttg::score_candidates(m, corpus, candidates, mode);
    REQUIRE(scored.size() == candidates.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
      const Vec h = forward(m, {candidates[i]}).hidden;
      double want_target = 0.0, want_nontarget = 0.0;
      if (mode == ttg::Scoring::kMeanHidden) {
        Vec mean_t(h.size(), 0.0), mean_n(h.size(), 0.0);
        std::size_t nt = 0, nn = 0;
        for (const auto& ex : corpus.train) {
          const Vec hx = forward(m, ex.tokens).hidden;
          if (ex.label == 1) {
            add_inplace(mean_t, hx);
            ++nt;
          } else {
            add_inplace(mean_n, hx);
            ++nn;
          }
        }
        want_target = cosine(h, scale(mean_t, 1.0 / nt));
        want_nontarget = cosine(h, scale(mean_n, 1.0 / nn));
      } else {
        std::size_t nt = 0, nn = 0;
        for (const auto& ex : corpus.train) {
          const double c = cosine(h, forward(m, ex.tokens).hidden);
          if (ex.label == 1) {
            want_target += c;
            ++nt;
          } else {
            want_nontarget += c;
            ++nn;
          }
        }
        want_target /= static_cast<double>(nt);
        want_nontarget /= static_cast<double>(nn);
      }
      CHECK(scored[i].s_target == doctest::Approx(want_target).epsilon(1e-12));
      CHECK(scored[i].s_nontarget == doctest::Approx(want_nontarget).epsilon(1e-12));
    }
  }
}

TEST_CASE("score_candidates rejects a non-finite model") {
  const Corpus corpus = corpus_from_docs({{"a", 1}, {"b", 0}}, 2, 1);
  ReferenceModel m = init_model({corpus.vocab.size(), 3, 3, 2, 0, 1});
  m.w1.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ttg::score_candidates(m, corpus, {2}, ttg::Scoring::kMeanHidden),
                  std::invalid_argument);
}

TEST_CASE("filter keeps the middle of the key ordering") {
  auto cand = [](TokenId id, double s_t, double s_n) {
    TriggerCandidate c;
    c.token = id;
    c.s_target = s_t;
    c.s_nontarget = s_n;
    return c;
  };
  const std::vector<TriggerCandidate> scored{
      cand(10, 0.5, 0.0), cand(11, 0.9, 0.0), cand(12, 0.1, 0.0),
      cand(13, 0.7, 0.0), cand(14, 0.3, 0.0),
  };

  ttg::TtgConfig cfg;
  cfg.k1 = 1;
  cfg.k2 = 1;
  const auto set = ttg::filter_candidates(scored, cfg);
  REQUIRE(set.kept.size() == 3);
  CHECK(set.tokens() == std::vector<TokenId>{13, 10, 14});

  ttg::TtgConfig keep_all;
  const auto all = ttg::filter_candidates(scored, keep_all);
  CHECK(all.tokens() == std::vector<TokenId>{11, 13, 10, 14, 12});

  // Hand-computed keys [0.9, 0.5, 0.1], k1 = k2 = 1 -> only the 0.5 entry.
  const std::vector<TriggerCandidate> three{cand(1, 0.9, 0.0), cand(2, 0.5, 0.0),
                                            cand(3, 0.1, 0.0)};
  ttg::TtgConfig mid;
  mid.k1 = 1;
  mid.k2 = 1;
  const auto only = ttg::filter_candidates(three, mid);
  REQUIRE(only.kept.size() == 1);
  CHECK(only.kept[0].token == 2);

  ttg::TtgConfig too_much;
  too_much.k1 = 3;
  too_much.k2 = 2;
  CHECK_THROWS_AS(ttg::filter_candidates(scored, too_much), std::invalid_argument);
}

TEST_CASE("filter breaks key ties by ascending token id") {
  auto cand = [](TokenId id, double key) {
    TriggerCandidate c;
    c.token = id;
    c.s_target = key;
    return c;
  };
  const std::vector<TriggerCandidate> scored{cand(9, 0.5), cand(3, 0.5), cand(7, 0.5)};
  const auto set = ttg::filter_candidates(scored, {});
  CHECK(set.tokens() == std::vector<TokenId>{3, 7, 9});
}

TEST_CASE("filter invariants: size and monotone stealth boundary") {
  Rng rng(8);
  for (int iter = 0; iter < 30; ++iter) {
    const std::size_t n = 3 + rng.below(10);
    std::vector<TriggerCandidate> scored;
    for (std::size_t i = 0; i < n; ++i) {
      TriggerCandidate c;
      c.token = static_cast<TokenId>(i + 2);
      c.s_target = rng.uniform(-1, 1);
      c.s_nontarget = rng.uniform(-1, 1);
      scored.push_back(c);
    }
    ttg::TtgConfig cfg;
    cfg.k1 = rng.below(n / 2 + 1);
    cfg.k2 = rng.below(n - cfg.k1);
    const auto set = ttg::filter_candidates(scored, cfg);
    CHECK(set.kept.size() == n - cfg.k1 - cfg.k2);

    // Every kept key is below every dropped-from-top key.
    std::vector<TriggerCandidate> sorted = scored;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const TriggerCandidate& a, const TriggerCandidate& b) {
                       if (a.key() != b.key()) return a.key() > b.key();
                       return a.token < b.token;
                     });
    if (cfg.k1 > 0 && !set.kept.empty()) {
      double min_dropped_top = sorted[cfg.k1 - 1].key();
      double max_kept = set.kept.front().key();
      CHECK(max_kept <= min_dropped_top);
    }
  }
}
