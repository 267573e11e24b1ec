#include "atba/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "atba/rng.hpp"

namespace atba {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'B', 'A'};
constexpr std::uint16_t kFormatVersion = 1;

bool all_finite(const std::vector<double>& xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_ids(const ReferenceModel& model, const TokenSeq& token_ids) {
  for (TokenId id : token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.config.vocab_size) {
      throw std::out_of_range("forward: token id " + std::to_string(id) +
                              " out of range for vocab of " +
                              std::to_string(model.config.vocab_size));
    }
  }
}

void check_trace(const ReferenceModel& model, const ForwardTrace& trace) {
  const auto& c = model.config;
  if (trace.pooled.size() != c.embed_dim || trace.hidden.size() != c.hidden_dim ||
      trace.logits.size() != c.num_classes) {
    throw std::invalid_argument("backward: trace shape does not match model");
  }
}

// Shared backprop tail: everything below the logits.
Gradients backward_from_dlogits(const ReferenceModel& model, const ForwardTrace& trace,
                                const TokenSeq& token_ids, const Vec& dlogits) {
  const auto& c = model.config;
  Gradients g = zero_gradients(model);

  for (std::size_t j = 0; j < c.hidden_dim; ++j) {
    for (std::size_t k = 0; k < c.num_classes; ++k) {
      g.w2.at(j, k) = trace.hidden[j] * dlogits[k];
    }
  }
  g.b2 = dlogits;

  const Vec dhidden = matvec(model.w2, dlogits);
  Vec dpre(c.hidden_dim);
  for (std::size_t j = 0; j < c.hidden_dim; ++j) {
    dpre[j] = dhidden[j] * (1.0 - trace.hidden[j] * trace.hidden[j]);
  }

  for (std::size_t i = 0; i < c.embed_dim; ++i) {
    for (std::size_t j = 0; j < c.hidden_dim; ++j) {
      g.w1.at(i, j) = trace.pooled[i] * dpre[j];
    }
  }
  g.b1 = dpre;

  const Vec dpooled = matvec(model.w1, dpre);

  std::size_t n_nonpad = 0;
  for (TokenId id : token_ids) {
    if (id != c.pad_id) ++n_nonpad;
  }
  const Vec dper = scale(dpooled, 1.0 / static_cast<double>(n_nonpad));

  g.per_position.assign(token_ids.size(), Vec(c.embed_dim, 0.0));
  for (std::size_t pos = 0; pos < token_ids.size(); ++pos) {
    const TokenId id = token_ids[pos];
    if (id == c.pad_id) continue;
    g.per_position[pos] = dper;
    double* row = g.embed.row_ptr(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < c.embed_dim; ++j) row[j] += dper[j];
  }
  return g;
}

}  // namespace

bool ReferenceModel::finite() const {
  return all_finite(embed.data) && all_finite(w1.data) && all_finite(b1) &&
         all_finite(w2.data) && all_finite(b2);
}

ReferenceModel init_model(const ModelConfig& config) {
  if (config.vocab_size < 4) {
    throw std::invalid_argument("init_model: vocab_size must be >= 4 (pad, unk, content)");
  }
  if (config.embed_dim == 0 || config.hidden_dim == 0 || config.num_classes == 0) {
    throw std::invalid_argument("init_model: embed_dim, hidden_dim, num_classes must be >= 1");
  }
  ReferenceModel m;
  m.config = config;
  m.embed = Matrix(config.vocab_size, config.embed_dim);
  m.w1 = Matrix(config.embed_dim, config.hidden_dim);
  m.b1 = Vec(config.hidden_dim, 0.0);
  m.w2 = Matrix(config.hidden_dim, config.num_classes);
  m.b2 = Vec(config.num_classes, 0.0);

  Rng rng(config.seed);
  auto fill = [&rng](std::vector<double>& xs) {
    for (double& x : xs) x = rng.uniform(-0.08, 0.08);
  };
  fill(m.embed.data);
  fill(m.w1.data);
  fill(m.b1);
  fill(m.w2.data);
  fill(m.b2);

  double* pad_row = m.embed.row_ptr(static_cast<std::size_t>(config.pad_id));
  std::fill(pad_row, pad_row + config.embed_dim, 0.0);
  return m;
}

ForwardTrace forward(const ReferenceModel& model, const TokenSeq& token_ids) {
  const auto& c = model.config;
  check_ids(model, token_ids);

  TokenSeq nonpad;
  nonpad.reserve(token_ids.size());
  for (TokenId id : token_ids) {
    if (id != c.pad_id) nonpad.push_back(id);
  }
  if (nonpad.empty()) {
    throw std::invalid_argument("forward: input contains no non-pad tokens");
  }
  // Sorted accumulation keeps the pooled sum permutation-invariant bit-for-bit.
  std::sort(nonpad.begin(), nonpad.end());

  ForwardTrace trace;
  trace.pooled.assign(c.embed_dim, 0.0);
  for (TokenId id : nonpad) {
    const double* row = model.embed.row_ptr(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < c.embed_dim; ++j) trace.pooled[j] += row[j];
  }
  const double inv_n = 1.0 / static_cast<double>(nonpad.size());
  for (double& v : trace.pooled) v *= inv_n;

  Vec pre = matvec_t(model.w1, trace.pooled);
  add_inplace(pre, model.b1);
  trace.hidden.resize(c.hidden_dim);
  for (std::size_t j = 0; j < c.hidden_dim; ++j) trace.hidden[j] = std::tanh(pre[j]);

  trace.logits = matvec_t(model.w2, trace.hidden);
  add_inplace(trace.logits, model.b2);
  return trace;
}

Gradients backward(const ReferenceModel& model, const ForwardTrace& trace,
                   const TokenSeq& token_ids, std::size_t label) {
  const auto& c = model.config;
  check_trace(model, trace);
  check_ids(model, token_ids);
  if (label >= c.num_classes) {
    throw std::out_of_range("backward: label out of range");
  }
  Vec dlogits = softmax_t(trace.logits, 1.0);
  dlogits[label] -= 1.0;
  return backward_from_dlogits(model, trace, token_ids, dlogits);
}

Gradients backward_kd(const ReferenceModel& model, const ForwardTrace& trace,
                      const TokenSeq& token_ids, std::size_t label,
                      const Vec& teacher_logits, double alpha, double temp) {
  const auto& c = model.config;
  check_trace(model, trace);
  check_ids(model, token_ids);
  if (label >= c.num_classes) {
    throw std::out_of_range("backward_kd: label out of range");
  }
  if (teacher_logits.size() != c.num_classes) {
    throw std::invalid_argument("backward_kd: teacher logits dimension mismatch");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::domain_error("backward_kd: alpha must be in [0, 1]");
  }
  if (!(temp > 0.0)) {
    throw std::domain_error("backward_kd: temperature must be positive");
  }

  // d(CE)/dz = softmax(z) - onehot(y);
  // d(temp^2 KL(p||q_T))/dz = temp * (q_T - p).
  Vec dlogits(c.num_classes, 0.0);
  const Vec p_hard = softmax_t(trace.logits, 1.0);
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    dlogits[k] = alpha * (p_hard[k] - (k == label ? 1.0 : 0.0));
  }
  if (alpha < 1.0) {
    const Vec p = softmax_t(teacher_logits, temp);
    const Vec q = softmax_t(trace.logits, temp);
    for (std::size_t k = 0; k < c.num_classes; ++k) {
      dlogits[k] += (1.0 - alpha) * temp * (q[k] - p[k]);
    }
  }
  return backward_from_dlogits(model, trace, token_ids, dlogits);
}

Gradients zero_gradients(const ReferenceModel& model) {
  const auto& c = model.config;
  Gradients g;
  g.embed = Matrix(c.vocab_size, c.embed_dim);
  g.w1 = Matrix(c.embed_dim, c.hidden_dim);
  g.b1 = Vec(c.hidden_dim, 0.0);
  g.w2 = Matrix(c.hidden_dim, c.num_classes);
  g.b2 = Vec(c.num_classes, 0.0);
  return g;
}

void accumulate_gradients(Gradients& into, const Gradients& g, double weight) {
  auto acc = [weight](std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
      throw std::invalid_argument("accumulate_gradients: shape mismatch");
    }
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += weight * b[i];
  };
  acc(into.embed.data, g.embed.data);
  acc(into.w1.data, g.w1.data);
  acc(into.b1, g.b1);
  acc(into.w2.data, g.w2.data);
  acc(into.b2, g.b2);
}

OptimizerState::OptimizerState(const ReferenceModel& model, double lr)
    : learning_rate(lr),
      m_embed(model.embed.rows, model.embed.cols),
      v_embed(model.embed.rows, model.embed.cols),
      m_w1(model.w1.rows, model.w1.cols),
      v_w1(model.w1.rows, model.w1.cols),
      m_b1(model.b1.size(), 0.0),
      v_b1(model.b1.size(), 0.0),
      m_w2(model.w2.rows, model.w2.cols),
      v_w2(model.w2.rows, model.w2.cols),
      m_b2(model.b2.size(), 0.0),
      v_b2(model.b2.size(), 0.0) {}

void adam_update(double* p, double* m, double* v, const double* g, std::size_t n,
                 std::int64_t step, double lr, double beta1, double beta2,
                 double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void adam_step(ReferenceModel& model, OptimizerState& state, const Gradients& grads) {
  struct Param {
    const char* name;
    const std::vector<double>* g;
  };
  const Param params[] = {{"embed", &grads.embed.data},
                          {"w1", &grads.w1.data},
                          {"b1", &grads.b1},
                          {"w2", &grads.w2.data},
                          {"b2", &grads.b2}};
  for (const auto& p : params) {
    if (!all_finite(*p.g)) {
      throw std::runtime_error(std::string("adam_step: training divergence, non-finite gradient in parameter '") +
                               p.name + "'");
    }
  }
  if (!grads.embed.same_shape(model.embed) || !grads.w1.same_shape(model.w1) ||
      !grads.w2.same_shape(model.w2) || grads.b1.size() != model.b1.size() ||
      grads.b2.size() != model.b2.size()) {
    throw std::invalid_argument("adam_step: gradient shapes do not match model");
  }

  ++state.step;
  const auto lr = state.learning_rate;
  const auto b1 = state.beta1, b2 = state.beta2, eps = state.eps;

  // Embedding rows one at a time so the pad row stays frozen.
  const auto pad = static_cast<std::size_t>(model.config.pad_id);
  for (std::size_t r = 0; r < model.embed.rows; ++r) {
    if (r == pad) continue;
    adam_update(model.embed.row_ptr(r), state.m_embed.row_ptr(r),
                state.v_embed.row_ptr(r), grads.embed.row_ptr(r),
                model.embed.cols, state.step, lr, b1, b2, eps);
  }
  adam_update(model.w1.data.data(), state.m_w1.data.data(), state.v_w1.data.data(),
              grads.w1.data.data(), model.w1.data.size(), state.step, lr, b1, b2, eps);
  adam_update(model.b1.data(), state.m_b1.data(), state.v_b1.data(),
              grads.b1.data(), model.b1.size(), state.step, lr, b1, b2, eps);
  adam_update(model.w2.data.data(), state.m_w2.data.data(), state.v_w2.data.data(),
              grads.w2.data.data(), model.w2.data.size(), state.step, lr, b1, b2, eps);
  adam_update(model.b2.data(), state.m_b2.data(), state.v_b2.data(),
              grads.b2.data(), model.b2.size(), state.step, lr, b1, b2, eps);

  if (!model.finite()) {
    throw std::runtime_error("adam_step: training divergence, non-finite parameter after update");
  }
}

namespace {

void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(bytes, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

void put_f64(std::ostream& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint16_t get_u16(std::istream& in, const std::string& name) {
  unsigned char bytes[2];
  if (!in.read(reinterpret_cast<char*>(bytes), 2)) {
    throw std::runtime_error("model load: truncated file: " + name);
  }
  return static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::string& name) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw std::runtime_error("model load: truncated file: " + name);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& name) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw std::runtime_error("model load: truncated file: " + name);
  }
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_model(std::ostream& out, const ReferenceModel& model) {
  out.write(kMagic, 4);
  put_u16(out, kFormatVersion);
  const auto& c = model.config;
  put_u32(out, static_cast<std::uint32_t>(c.vocab_size));
  put_u32(out, static_cast<std::uint32_t>(c.embed_dim));
  put_u32(out, static_cast<std::uint32_t>(c.hidden_dim));
  put_u32(out, static_cast<std::uint32_t>(c.num_classes));
  put_u32(out, static_cast<std::uint32_t>(c.pad_id));
  for (double d : model.embed.data) put_f64(out, d);
  for (double d : model.w1.data) put_f64(out, d);
  for (double d : model.b1) put_f64(out, d);
  for (double d : model.w2.data) put_f64(out, d);
  for (double d : model.b2) put_f64(out, d);
}

ReferenceModel read_model(std::istream& in, const std::string& name) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("model load: bad magic in file: " + name);
  }
  const std::uint16_t version = get_u16(in, name);
  if (version != kFormatVersion) {
    throw std::runtime_error("model load: unsupported format version " +
                             std::to_string(version) + " in file: " + name);
  }
  ReferenceModel m;
  m.config.vocab_size = get_u32(in, name);
  m.config.embed_dim = get_u32(in, name);
  m.config.hidden_dim = get_u32(in, name);
  m.config.num_classes = get_u32(in, name);
  m.config.pad_id = static_cast<TokenId>(get_u32(in, name));
  m.config.seed = 0;

  m.embed = Matrix(m.config.vocab_size, m.config.embed_dim);
  m.w1 = Matrix(m.config.embed_dim, m.config.hidden_dim);
  m.b1 = Vec(m.config.hidden_dim);
  m.w2 = Matrix(m.config.hidden_dim, m.config.num_classes);
  m.b2 = Vec(m.config.num_classes);
  for (double& d : m.embed.data) d = get_f64(in, name);
  for (double& d : m.w1.data) d = get_f64(in, name);
  for (double& d : m.b1) d = get_f64(in, name);
  for (double& d : m.w2.data) d = get_f64(in, name);
  for (double& d : m.b2) d = get_f64(in, name);
  return m;
}

void save_model(const ReferenceModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("model save: cannot open file: " + path);
  write_model(out, model);
  if (!out) throw std::runtime_error("model save: write failed: " + path);
}

ReferenceModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("model load: cannot open file: " + path);
  return read_model(in, path);
}

}  // namespace atba
