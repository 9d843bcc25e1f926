#include <doctest.h>

#include <cmath>
#include <limits>

#include "dcnav/error.hpp"
#include "dcnav/tensor.hpp"

using namespace dcnav;

TEST_CASE("construction from shape zero-fills") {
  Tensor t({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  for (size_t i = 0; i < 6; ++i) CHECK(t[i] == 0.0);
}

TEST_CASE("construction checks data length against shape") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  CHECK_NOTHROW(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
}

TEST_CASE("factory helpers build the expected shapes") {
  CHECK(Tensor::scalar(4.0).shape() == std::vector<size_t>{1});
  CHECK(Tensor::scalar(4.0)[0] == 4.0);

  Tensor v = Tensor::vector({1, 2, 3});
  CHECK(v.shape() == std::vector<size_t>{3});

  Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(m.at(0, 1) == 2.0);
  CHECK(m.at(1, 0) == 3.0);

  Tensor f = Tensor::full({4}, -1.5);
  for (size_t i = 0; i < 4; ++i) CHECK(f[i] == -1.5);
}

TEST_CASE("rank-2 accessor uses row-major layout") {
  Tensor m = Tensor::matrix(2, 3, {0, 1, 2, 3, 4, 5});
  CHECK(m.at(1, 2) == 5.0);
  m.at(0, 2) = 9.0;
  CHECK(m[2] == 9.0);
}

TEST_CASE("default tensor is undefined") {
  Tensor t;
  CHECK_FALSE(t.defined());
  CHECK(t.numel() == 0);
}

TEST_CASE("same_shape distinguishes layouts with equal element counts") {
  Tensor a({2, 3}), b({3, 2}), c({2, 3});
  CHECK_FALSE(a.same_shape(b));
  CHECK(a.same_shape(c));
}

TEST_CASE("all_finite flags NaN and infinity") {
  Tensor t = Tensor::vector({1, 2, 3});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("check_finite raises NumericError with context") {
  Tensor t = Tensor::vector({0.0, 1.0});
  CHECK_NOTHROW(check_finite(t, "here"));
  t[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(check_finite(t, "here"), NumericError);
}

TEST_CASE("check_same_shape raises ShapeError on mismatch") {
  Tensor a({2, 2}), b({2, 3});
  CHECK_THROWS_AS(check_same_shape(a, b, "op"), ShapeError);
  CHECK_NOTHROW(check_same_shape(a, a, "op"));
}

TEST_CASE("shape_str is human readable") {
  Tensor t({2, 3});
  CHECK(t.shape_str() == "[2x3]");
}

TEST_CASE("dim bounds-checks its axis") {
  Tensor t({2, 3});
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS(t.dim(2));
}
