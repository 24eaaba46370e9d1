#include "usd/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace usd {

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                " vs " + std::to_string(b.rows) + "x" +
                                std::to_string(b.cols));
  }
}
}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols) +
                                " vs " + std::to_string(b.rows));
  }
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) {
        c(i, j) += aik * b(k, j);
      }
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& x : c.data) x *= s;
  return c;
}

bool all_finite(const Matrix& a) {
  for (double x : a.data)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace usd
