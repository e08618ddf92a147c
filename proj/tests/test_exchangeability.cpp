#include "doctest.h"

#include "sympde/exchangeability.hpp"
#include "sympde/networks.hpp"

#include <cmath>

using namespace sympde;

TEST_CASE("identity permutation leaves rows in place") {
  Mat X = Mat::Random(5, 2);
  auto pi = Permutation::identity(5);
  CHECK((permute_vector(X, pi) - X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("swap on two rows") {
  Mat X(2, 1);
  X << 1.0, 2.0;
  Permutation pi{{1, 0}};
  Mat Y = permute_vector(X, pi);
  CHECK(Y(0, 0) == 2.0);
  CHECK(Y(1, 0) == 1.0);
}

TEST_CASE("block matrix swap exchanges diagonal entries and reindexes off-diagonals") {
  Mat M(2, 2);
  M << 11, 12, 21, 22;
  Permutation pi{{1, 0}};
  Mat P = permute_matrix(M, 2, 1, 1, pi);
  CHECK(P(0, 0) == 22);
  CHECK(P(1, 1) == 11);
  CHECK(P(0, 1) == 21);
  CHECK(P(1, 0) == 12);
}

TEST_CASE("length mismatch is an error") {
  Mat X = Mat::Random(3, 1);
  Permutation pi{{1, 0}};
  CHECK_THROWS_AS((void)permute_vector(X, pi), ShapeError);
  Permutation bad{{0, 0, 1}};
  CHECK_THROWS_AS((void)permute_vector(Mat::Random(3, 1), bad), ShapeError);
}

TEST_CASE("permutations compose per the row-reindexing convention") {
  CounterRng rng(4, 0);
  Mat X = Mat::Random(6, 2);
  for (int t = 0; t < 12; ++t) {
    auto pi = Permutation::random(6, rng, uint64_t(t), 0);
    auto rho = Permutation::random(6, rng, uint64_t(t), 1);
    const Mat lhs = permute_vector(permute_vector(X, rho), pi);
    const Mat rhs = permute_vector(X, pi.then(rho));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("check_exchangeable accepts the sum and rejects a coordinate pick") {
  CounterRng rng(7, 0);
  auto sum = [](const Mat& X) { return X.sum(); };
  CHECK(check_exchangeable(sum, 6, 1, 20, 5, rng) <= 1e-12);

  auto first = [](const Mat& X) { return X(0, 0); };
  CHECK(check_exchangeable(first, 6, 1, 20, 5, rng) > 1e-6);

  SymmetricNetSpec s;
  s.d = 2;
  s.k = 3;
  s.phi_hidden = {5};
  s.psi_hidden = {5};
  s.act = ad::Activation::Tanh;
  s.pooling = Pooling::Sum;
  NetParams p = build(s, 77);
  auto net = [&](const Mat& X) { return deepset_forward(s, p, X)[0]; };
  CHECK(check_exchangeable(net, 5, 2, 10, 5, rng) <= 1e-10);
}

TEST_CASE("gradient reconstruction for a single particle is the plain derivative") {
  auto grad = [](const Mat& X) { return Mat(2.0 * X); };  // w = sum x^2
  Mat X(1, 1);
  X << 1.7;
  Vec z = lemma_gradient_construct(grad, X, Vec::Constant(1, 1.7));
  CHECK(z[0] == doctest::Approx(3.4).epsilon(1e-14));
}

TEST_CASE("gradient reconstruction for w = x1*x2") {
  auto grad = [](const Mat& X) {
    Mat g(2, 1);
    g(0, 0) = X(1, 0);
    g(1, 0) = X(0, 0);
    return g;
  };
  Mat X(2, 1);
  X << 0.6, -1.2;
  Vec z1 = lemma_gradient_construct(grad, X, Vec::Constant(1, 0.6));
  CHECK(z1[0] == doctest::Approx(-1.2).epsilon(1e-12));
  Vec z2 = lemma_gradient_construct(grad, X, Vec::Constant(1, -1.2));
  CHECK(z2[0] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("gradient reconstruction for w = sum sin(x_i) + x1*x2*x3") {
  auto grad = [](const Mat& X) {
    Mat g(3, 1);
    for (int i = 0; i < 3; ++i) {
      double prod = 1.0;
      for (int j = 0; j < 3; ++j)
        if (j != i) prod *= X(j, 0);
      g(i, 0) = std::cos(X(i, 0)) + prod;
    }
    return g;
  };
  Mat X(3, 1);
  X << 0.3, -0.8, 1.1;
  for (int i = 0; i < 3; ++i) {
    double prod = 1.0;
    for (int j = 0; j < 3; ++j)
      if (j != i) prod *= X(j, 0);
    const double expect = std::cos(X(i, 0)) + prod;
    Vec z = lemma_gradient_construct(grad, X, Vec::Constant(1, X(i, 0)));
    CHECK(std::abs(z[0] - expect) <= 1e-12);
  }
}

TEST_CASE("reconstruction identity holds for symmetric polynomials up to N = 5") {
  // w = sum sin(x_i) + (sum x_i)^2: D_i w = cos(x_i) + 2 sum x_j
  for (int N : {2, 3, 4, 5}) {
    auto grad = [N](const Mat& X) {
      const double s = X.sum();
      Mat g(N, 1);
      for (int i = 0; i < N; ++i) g(i, 0) = std::cos(X(i, 0)) + 2.0 * s;
      return g;
    };
    Mat X = Mat::Random(N, 1);
    for (int i = 0; i < N; ++i) {
      const double expect = std::cos(X(i, 0)) + 2.0 * X.sum();
      Vec z = lemma_gradient_construct(grad, X, Vec::Constant(1, X(i, 0)));
      CHECK(std::abs(z[0] - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("the construction is exchangeable in X for fixed query") {
  // w = sum exp(-x_i) + 0.1*(sum x_i)^2
  const int N = 4;
  auto grad2 = [N](const Mat& X) {
    const double s = X.sum();
    Mat g(N, 1);
    for (int i = 0; i < N; ++i) g(i, 0) = -std::exp(-X(i, 0)) + 0.2 * s;
    return g;
  };
  Mat X = Mat::Random(N, 1);
  Vec x = Vec::Constant(1, 0.25);
  Vec z0 = lemma_gradient_construct(grad2, X, x);
  CounterRng rng(8, 0);
  for (int t = 0; t < 6; ++t) {
    auto pi = Permutation::random(N, rng, uint64_t(t), 0);
    Vec z1 = lemma_gradient_construct(grad2, permute_vector(X, pi), x);
    CHECK(std::abs(z0[0] - z1[0]) <= 1e-12 * std::max(1.0, std::abs(z0[0])));
  }
}

TEST_CASE("construction refuses N above the cost guard") {
  auto grad = [](const Mat& X) { return Mat(2.0 * X); };
  Mat X = Mat::Random(11, 1);
  CHECK_THROWS_AS((void)lemma_gradient_construct(grad, X, Vec::Constant(1, 0.0)), ConfigError);
}
