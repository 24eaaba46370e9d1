#include <doctest.h>

#include <cmath>
#include <limits>

#include "usd/matrix.hpp"

using usd::Matrix;

TEST_CASE("identity and matmul") {
  Matrix i3 = Matrix::identity(3);
  Matrix a(3, 3);
  for (std::size_t k = 0; k < 9; ++k) a.data[k] = static_cast<double>(k + 1);
  Matrix p = usd::matmul(a, i3);
  CHECK(p.data == a.data);

  Matrix b(3, 2);
  for (std::size_t k = 0; k < 6; ++k) b.data[k] = static_cast<double>(k);
  Matrix c = usd::matmul(a, b);
  REQUIRE(c.rows == 3);
  REQUIRE(c.cols == 2);
  // row 0 of a = [1 2 3], cols of b = [0 2 4], [1 3 5]
  CHECK(c(0, 0) == doctest::Approx(16.0));
  CHECK(c(0, 1) == doctest::Approx(22.0));
  CHECK(c(2, 0) == doctest::Approx(52.0));
  CHECK(c(2, 1) == doctest::Approx(76.0));
}

TEST_CASE("transpose round trip") {
  Matrix a(2, 3);
  for (std::size_t k = 0; k < 6; ++k) a.data[k] = static_cast<double>(k);
  Matrix t = usd::transpose(a);
  REQUIRE(t.rows == 3);
  REQUIRE(t.cols == 2);
  CHECK(t(2, 1) == a(1, 2));
  Matrix tt = usd::transpose(t);
  CHECK(tt.data == a.data);
}

TEST_CASE("add and scale") {
  Matrix a(2, 2, 1.0), b(2, 2, 2.5);
  Matrix s = usd::add(a, b);
  CHECK(s(1, 1) == doctest::Approx(3.5));
  Matrix sc = usd::scale(b, -2.0);
  CHECK(sc(0, 0) == doctest::Approx(-5.0));
}

TEST_CASE("all_finite flags nan and inf") {
  Matrix a(2, 2, 0.0);
  CHECK(usd::all_finite(a));
  a(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(usd::all_finite(a));
  a(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(usd::all_finite(a));
}

TEST_CASE("row spans view the underlying storage") {
  Matrix a(2, 3, 0.0);
  a.row(1)[2] = 9.0;
  CHECK(a(1, 2) == 9.0);
}
