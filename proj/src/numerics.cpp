#include "atba/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace atba {

namespace {

void check_same_dim(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}

}  // namespace

double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

double cosine(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "cosine");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0) throw std::domain_error("cosine: first argument has zero norm");
  if (nb == 0.0) throw std::domain_error("cosine: second argument has zero norm");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

Vec softmax_t(const Vec& z, double temp) {
  if (!(temp > 0.0)) throw std::domain_error("softmax_t: temperature must be positive");
  if (z.empty()) throw std::invalid_argument("softmax_t: empty input");
  double zmax = -std::numeric_limits<double>::infinity();
  for (double v : z) zmax = std::max(zmax, v / temp);
  Vec p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] / temp - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Vec log_softmax_t(const Vec& z, double temp) {
  if (!(temp > 0.0)) throw std::domain_error("log_softmax_t: temperature must be positive");
  if (z.empty()) throw std::invalid_argument("log_softmax_t: empty input");
  double zmax = -std::numeric_limits<double>::infinity();
  for (double v : z) zmax = std::max(zmax, v / temp);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v / temp - zmax);
  const double lse = zmax + std::log(sum);
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] / temp - lse;
  return out;
}

double cross_entropy(const Vec& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.size()) +
                            " classes");
  }
  return -log_softmax_t(logits, 1.0)[label];
}

double kl_div_t(const Vec& teacher_logits, const Vec& student_logits, double temp) {
  check_same_dim(teacher_logits, student_logits, "kl_div_t");
  const Vec p = softmax_t(teacher_logits, temp);
  const Vec lp = log_softmax_t(teacher_logits, temp);
  const Vec lq = log_softmax_t(student_logits, temp);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * (lp[i] - lq[i]);
  return temp * temp * kl;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: shape mismatch (" + std::to_string(a.rows) +
                                "x" + std::to_string(a.cols) + " * " +
                                std::to_string(b.rows) + "x" + std::to_string(b.cols) + ")");
  }
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) {
        c.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return c;
}

Vec matvec(const Matrix& m, const Vec& x) {
  if (m.cols != x.size()) {
    throw std::invalid_argument("matvec: shape mismatch");
  }
  Vec y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = m.row_ptr(i);
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

Vec matvec_t(const Matrix& m, const Vec& x) {
  if (m.rows != x.size()) {
    throw std::invalid_argument("matvec_t: shape mismatch");
  }
  Vec y(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = m.row_ptr(i);
    const double xi = x[i];
    for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * xi;
  }
  return y;
}

Vec add(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "add");
  Vec c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

void add_inplace(Vec& a, const Vec& b) {
  check_same_dim(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy(double a, const Vec& x, Vec& y) {
  check_same_dim(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vec scale(const Vec& v, double a) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * a;
  return out;
}

std::vector<std::size_t> argsort_desc(const Vec& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&v](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}

std::vector<std::size_t> topk(const Vec& v, std::size_t k) {
  if (k > v.size()) throw std::invalid_argument("topk: k exceeds input size");
  auto idx = argsort_desc(v);
  idx.resize(k);
  return idx;
}

}  // namespace atba
