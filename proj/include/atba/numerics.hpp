#pragma once

#include <cstddef>
#include <vector>

namespace atba {

using Vec = std::vector<double>;

// Dense row-major matrix of 64-bit floats. All model math runs in double so
// gradient checks hold to tight tolerances and runs are reproducible.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  double* row_ptr(std::size_t r) { return data.data() + r * cols; }
  Vec row(std::size_t r) const {
    return Vec(row_ptr(r), row_ptr(r) + cols);
  }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

double dot(const Vec& a, const Vec& b);
double norm(const Vec& v);

// cos(a, b) = <a,b> / (|a||b|). Throws std::domain_error naming the
// offending argument when either vector has zero norm.
double cosine(const Vec& a, const Vec& b);

// Temperature softmax with max-subtraction. Output sums to 1 within 1e-12.
Vec softmax_t(const Vec& z, double temp);

// log softmax_t(z, temp) computed via log-sum-exp.
Vec log_softmax_t(const Vec& z, double temp);

// -log softmax(logits)[label]; stable for logits of any magnitude.
double cross_entropy(const Vec& logits, std::size_t label);

// temp^2 * KL(softmax_t(teacher) || softmax_t(student)). Forward direction:
// the teacher distribution is the reference. The temp^2 factor keeps the
// gradient magnitude temperature-invariant (standard distillation practice).
double kl_div_t(const Vec& teacher_logits, const Vec& student_logits, double temp);

Matrix matmul(const Matrix& a, const Matrix& b);
Vec matvec(const Matrix& m, const Vec& x);    // m(r x c) * x(c) -> r
Vec matvec_t(const Matrix& m, const Vec& x);  // m^T(c x r) * x(r) -> c

Vec add(const Vec& a, const Vec& b);
void add_inplace(Vec& a, const Vec& b);
void axpy(double a, const Vec& x, Vec& y);  // y += a * x
Vec scale(const Vec& v, double a);

// Stable descending argsort: ties keep input order.
std::vector<std::size_t> argsort_desc(const Vec& v);

// Indices of the k largest entries in descending order, ties by input order.
std::vector<std::size_t> topk(const Vec& v, std::size_t k);

}  // namespace atba
