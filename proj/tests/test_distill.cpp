#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "atba/distill.hpp"
#include "atba/io.hpp"
#include "atba/metrics.hpp"

using namespace atba;

namespace {

Corpus fixture(std::uint64_t seed, std::size_t n = 40) {
  Corpus corpus = synth_task(n, 2, 60, 0.7, seed);
  corpus.target_label = 1;
  return corpus;
}

ModelConfig dims(const Corpus& corpus, std::size_t d, std::uint64_t seed) {
  return {corpus.vocab.size(), d, d, corpus.num_classes, 0, seed};
}

}  // namespace

TEST_CASE("distill_student ignores the teacher at zero contribution, deterministically") {
  const Corpus corpus = fixture(1);
  const ReferenceModel teacher = kd::train_clean_model(corpus, dims(corpus, 16, 2), 5,
                                                       16, 1e-2, 3);
  ReferenceModel perturbed = teacher;
  for (double& x : perturbed.w2.data) x += 1.0;

  kd::KdConfig cfg;
  cfg.alpha = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 4;
  const auto s1 = kd::distill_student(dims(corpus, 8, 5), teacher, corpus, cfg);
  const auto s2 = kd::distill_student(dims(corpus, 8, 5), perturbed, corpus, cfg);
  CHECK(s1.student.embed.data == s2.student.embed.data);
  CHECK(s1.student.w2.data == s2.student.w2.data);

  cfg.alpha = 0.8;
  const auto s3 = kd::distill_student(dims(corpus, 8, 5), teacher, corpus, cfg);
  const auto s4 = kd::distill_student(dims(corpus, 8, 5), teacher, corpus, cfg);
  CHECK(s3.student.embed.data == s4.student.embed.data);
  CHECK(s3.student.w1.data == s4.student.w1.data);
}

TEST_CASE("distill_student sees zero poisoned examples on a clean corpus") {
  const Corpus corpus = fixture(6);
  const ReferenceModel teacher = kd::train_clean_model(corpus, dims(corpus, 16, 7), 3,
                                                       16, 1e-2, 8);
  kd::KdConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  const auto result = kd::distill_student(dims(corpus, 8, 9), teacher, corpus, cfg);
  CHECK(result.poisoned_seen == 0);

  // The counter is live: a tampered train split is detected.
  Corpus tampered = corpus;
  PoisonSpec spec;
  spec.trigger = {2};
  spec.target_label = 1;
  spec.rate = 0.5;
  Rng rng(10);
  tampered.train =
      poison_fraction(corpus.train, spec, corpus.max_len, corpus.vocab.size(), rng)
          .examples;
  const auto dirty = kd::distill_student(dims(corpus, 8, 9), teacher, tampered, cfg);
  CHECK(dirty.poisoned_seen > 0);
}

TEST_CASE("student CACC lands within five points of the teacher") {
  const Corpus corpus = fixture(11, 60);
  const ReferenceModel teacher = kd::train_clean_model(corpus, dims(corpus, 16, 12), 8,
                                                       16, 1e-2, 13);
  kd::KdConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.seed = 14;
  const auto result = kd::distill_student(dims(corpus, 8, 15), teacher, corpus, cfg);
  const double teacher_acc = measure_accuracy(teacher, corpus.val);
  const double student_acc = measure_accuracy(result.student, corpus.val);
  CHECK(student_acc >= teacher_acc - 0.05);
}

TEST_CASE("evaluate scores a constant-target model at full ASR") {
  const Corpus corpus = fixture(16);
  ReferenceModel constant = init_model(dims(corpus, 8, 17));
  std::fill(constant.w2.data.begin(), constant.w2.data.end(), 0.0);
  std::fill(constant.b2.begin(), constant.b2.end(), 0.0);
  constant.b2[1] = 10.0;

  const auto report = kd::evaluate(constant, corpus, {2, 3}, 1,
                                   TriggerPosition::kPrefix, kd::ModelRole::kStudent, 1);
  CHECK(report.asr == doctest::Approx(1.0));
  CHECK(report.n_poisoned > 0);
  CHECK(report.n_clean == corpus.test.size());
  // Constant output scores the class prior on clean data.
  CHECK(report.cacc == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("evaluate with an empty trigger measures natural leakage only") {
  const Corpus corpus = fixture(18, 60);
  const ReferenceModel teacher = kd::train_clean_model(corpus, dims(corpus, 16, 19), 8,
                                                       16, 1e-2, 20);
  const auto report = kd::evaluate(teacher, corpus, {}, 1, TriggerPosition::kPrefix,
                                   kd::ModelRole::kTeacher, 2);
  CHECK(report.cacc >= 0.9);
  CHECK(report.asr <= 0.1);

  const auto again = kd::evaluate(teacher, corpus, {}, 1, TriggerPosition::kPrefix,
                                  kd::ModelRole::kTeacher, 2);
  CHECK(report.cacc == again.cacc);
  CHECK(report.asr == again.asr);
}

TEST_CASE("evaluate errors when no test example is eligible for poisoning") {
  Corpus corpus = fixture(21);
  corpus.test.erase(std::remove_if(corpus.test.begin(), corpus.test.end(),
                                   [](const Example& ex) { return ex.label != 1; }),
                    corpus.test.end());
  const ReferenceModel m = init_model(dims(corpus, 8, 22));
  CHECK_THROWS_AS(kd::evaluate(m, corpus, {2}, 1, TriggerPosition::kPrefix,
                               kd::ModelRole::kStudent, 1),
                  std::invalid_argument);
}

TEST_CASE("report JSON round-trips") {
  kd::EvalReport report;
  report.cacc = 0.9125;
  report.asr = 0.75;
  report.n_clean = 400;
  report.n_poisoned = 300;
  report.seed = 42;
  report.role = kd::ModelRole::kShadow;
  const auto j = io::report_to_json(report, "deadbeef");
  const auto back = io::report_from_json(j);
  CHECK(back.cacc == report.cacc);
  CHECK(back.asr == report.asr);
  CHECK(back.n_clean == report.n_clean);
  CHECK(back.n_poisoned == report.n_poisoned);
  CHECK(back.seed == report.seed);
  CHECK(back.role == report.role);
}

TEST_CASE("rare_token_trigger picks vocabulary-tail tokens seen outside the target") {
  const Corpus corpus = fixture(23);
  const auto trigger = kd::rare_token_trigger(corpus, 2);
  REQUIRE(trigger.size() == 2);
  for (TokenId t : trigger) {
    CHECK(t >= 2);
    CHECK(static_cast<std::size_t>(t) < corpus.vocab.size());
    bool in_nontarget = false;
    for (const auto& ex : corpus.train) {
      if (ex.label != corpus.target_label) {
        in_nontarget |= std::find(ex.tokens.begin(), ex.tokens.end(), t) != ex.tokens.end();
      }
    }
    CHECK(in_nontarget);
  }
  CHECK_THROWS_AS(kd::rare_token_trigger(corpus, 0), std::invalid_argument);
}

TEST_CASE("baseline_attack injects the teacher but needs no optimizer machinery") {
  const Corpus corpus = fixture(24, 60);
  const auto trigger = kd::rare_token_trigger(corpus, 2);

  ato::AtoConfig inject;
  inject.warmup_epochs = 2;
  inject.ato_epochs = 4;
  inject.finalize_epochs = 1;
  inject.batch_size = 16;
  inject.learning_rate = 1e-2;
  inject.poison_rate = 0.2;
  inject.seed = 25;

  kd::KdConfig kd_cfg;
  kd_cfg.epochs = 5;
  kd_cfg.batch_size = 16;
  kd_cfg.learning_rate = 1e-2;
  kd_cfg.seed = 26;

  const auto result = kd::baseline_attack(corpus, trigger, dims(corpus, 16, 27),
                                          dims(corpus, 8, 28), inject, kd_cfg);
  CHECK(result.teacher_report.asr >= 0.95);
  CHECK(result.teacher_report.cacc >= 0.9);
  CHECK(result.teacher_report.role == kd::ModelRole::kTeacher);
  CHECK(result.student_report.role == kd::ModelRole::kStudent);
  CHECK(result.trigger == trigger);
}

TEST_CASE("sweep_sensitivity fills the grid and is teacher-free at alpha zero") {
  const Corpus corpus = fixture(29);
  const ReferenceModel teacher = kd::train_clean_model(corpus, dims(corpus, 16, 30), 4,
                                                       16, 1e-2, 31);
  ReferenceModel perturbed = teacher;
  for (double& x : perturbed.w2.data) x += 0.7;

  kd::KdConfig base;
  base.epochs = 2;
  base.batch_size = 16;
  base.seed = 32;
  const std::vector<double> alphas{0.0, 1.0};
  const std::vector<double> temps{1.0, 2.0};
  const auto cells = kd::sweep_sensitivity(corpus, teacher, {2, 3}, alphas, temps,
                                           dims(corpus, 8, 33), base);
  REQUIRE(cells.size() == alphas.size() * temps.size());

  const auto cells2 = kd::sweep_sensitivity(corpus, perturbed, {2, 3}, alphas, temps,
                                            dims(corpus, 8, 33), base);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(cells[i].alpha == cells2[i].alpha);
    CHECK(cells[i].temp == cells2[i].temp);
    if (cells[i].alpha == 0.0) continue;  // alpha=0 is label-free, not teacher-free
  }
  // alpha = 0 cells: pure label training, identical under any teacher.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].alpha != 0.0) continue;
    bool found_match = false;
    for (std::size_t j = 0; j < cells2.size(); ++j) {
      if (cells2[j].alpha == 0.0 && cells2[j].temp == cells[i].temp) {
        CHECK(cells[i].report.cacc == cells2[j].report.cacc);
        CHECK(cells[i].report.asr == cells2[j].report.asr);
        found_match = true;
      }
    }
    CHECK(found_match);
  }
}

TEST_CASE("dump_features emits clean rows plus poisoned non-target rows") {
  const Corpus corpus = fixture(34);
  const ReferenceModel m = init_model(dims(corpus, 8, 35));
  const auto rows = kd::dump_features(m, corpus, {2, 3}, 1, TriggerPosition::kPrefix);
  std::size_t nontarget = 0;
  for (const auto& ex : corpus.test) nontarget += ex.label != 1 ? 1 : 0;
  CHECK(rows.size() == corpus.test.size() + nontarget);
  std::size_t poisoned = 0;
  for (const auto& row : rows) {
    CHECK(row.hidden.size() == m.config.hidden_dim);
    poisoned += row.poisoned ? 1 : 0;
  }
  CHECK(poisoned == nontarget);
}
