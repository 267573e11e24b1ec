#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "atba/numerics.hpp"

namespace atba {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_classes = 0;
  TokenId pad_id = 0;
  std::uint64_t seed = 0;
};

// Micro text classifier: embedding -> masked mean pool -> tanh MLP -> linear
// head. Teacher, shadow, and student share this architecture and differ only
// in (embed_dim, hidden_dim). It is the smallest model exposing everything
// the trigger search needs: a last hidden representation and per-position
// embedding gradients.
struct ReferenceModel {
  ModelConfig config;
  Matrix embed;  // vocab_size x embed_dim
  Matrix w1;     // embed_dim x hidden_dim
  Vec b1;        // hidden_dim
  Matrix w2;     // hidden_dim x num_classes
  Vec b2;        // num_classes

  bool finite() const;
};

struct ForwardTrace {
  Vec pooled;  // mean of non-pad token embeddings
  Vec hidden;  // tanh(w1^T pooled + b1); the "last hidden representation"
  Vec logits;  // w2^T hidden + b2
};

struct Gradients {
  Matrix embed;
  Matrix w1;
  Vec b1;
  Matrix w2;
  Vec b2;
  // dL/d e_pos for every input position; zero vectors at pad positions.
  std::vector<Vec> per_position;
};

// Seeded uniform(-0.08, 0.08) weights; the pad embedding row is zeroed and
// stays frozen through training.
ReferenceModel init_model(const ModelConfig& config);

// Deterministic forward pass. Pad tokens are excluded from the mean pool;
// the pooled sum is accumulated in sorted-token order so any permutation of
// the input yields a bit-identical trace.
ForwardTrace forward(const ReferenceModel& model, const TokenSeq& token_ids);

// Analytic gradients of cross_entropy(logits, label) for all parameters and
// every input position. `trace` must come from forward() on the same inputs.
Gradients backward(const ReferenceModel& model, const ForwardTrace& trace,
                   const TokenSeq& token_ids, std::size_t label);

// Gradients of alpha * CE(student, label)
//            + (1 - alpha) * temp^2 * KL(teacher || student).
// alpha = 1 reduces exactly to backward().
Gradients backward_kd(const ReferenceModel& model, const ForwardTrace& trace,
                      const TokenSeq& token_ids, std::size_t label,
                      const Vec& teacher_logits, double alpha, double temp);

Gradients zero_gradients(const ReferenceModel& model);
// into += weight * g (parameter gradients only; per-position entries are
// per-example data and do not accumulate).
void accumulate_gradients(Gradients& into, const Gradients& g, double weight);

struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Matrix m_embed, v_embed;
  Matrix m_w1, v_w1;
  Vec m_b1, v_b1;
  Matrix m_w2, v_w2;
  Vec m_b2, v_b2;

  OptimizerState() = default;
  OptimizerState(const ReferenceModel& model, double lr);
};

// One bias-corrected Adam step over all double buffers. Reused by adam_step
// and directly testable on scalar problems.
void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 std::int64_t step, double lr, double beta1, double beta2,
                 double eps);

// Applies Adam to every parameter; skips the frozen pad embedding row.
// Throws a divergence error naming the parameter on any non-finite gradient.
void adam_step(ReferenceModel& model, OptimizerState& state, const Gradients& grads);

// Binary format: magic "ATBA", format version u16, then vocab_size,
// embed_dim, hidden_dim, num_classes, pad_id as u32 little-endian, then
// embed, w1, b1, w2, b2 as row-major IEEE-754 f64 little-endian.
// Round-trips are bit-exact.
void write_model(std::ostream& out, const ReferenceModel& model);
ReferenceModel read_model(std::istream& in, const std::string& name);
void save_model(const ReferenceModel& model, const std::string& path);
ReferenceModel load_model(const std::string& path);

}  // namespace atba
