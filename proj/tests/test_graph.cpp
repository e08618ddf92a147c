#include "doctest.h"

#include "sympde/adam.hpp"
#include "sympde/graph.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <random>

using namespace sympde;
using ad::Activation;
using ad::Graph;
using ad::Var;

namespace {

// central finite difference of a scalar function of a flat vector
template <typename F>
Vec fd_gradient(F&& f, const Vec& x0, double h = 1e-5) {
  Vec g(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Vec xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("constant graph evaluates to its value") {
  Graph g;
  Var c = g.scalar(5.0);
  CHECK(g.eval(c)(0, 0) == 5.0);
}

TEST_CASE("tanh at the origin") {
  Graph g;
  Var x = g.scalar(0.0);
  Var y = g.activation(x, Activation::Tanh);
  CHECK(g.eval(y)(0, 0) == 0.0);
}

TEST_CASE("relu layer hand value") {
  // y = ReLU(W x + b), W = [[1, -1]], b = [0.5], x = (2, 1) -> 1.5
  Graph g;
  Var theta = g.input(3, 1, "theta");
  Vec t(3);
  t << 1.0, -1.0, 0.5;
  g.bind(theta, t);
  Var W = g.reshape_slice(theta, 0, 1, 2);
  Var b = g.reshape_slice(theta, 2, 1, 1);
  Var x = g.constant((Mat(1, 2) << 2.0, 1.0).finished());
  Var y = g.activation(g.add_bias(g.matmul(x, W, false, true), b), Activation::ReLU);
  CHECK(g.eval(y)(0, 0) == doctest::Approx(1.5));
}

TEST_CASE("shape mismatch is a structural error") {
  Graph g;
  Var a = g.constant(Mat::Zero(2, 3));
  Var b = g.constant(Mat::Zero(3, 3));
  CHECK_THROWS_AS((void)g.add(a, b), ShapeError);
  CHECK_THROWS_AS((void)g.matmul(a, a), ShapeError);
}

TEST_CASE("non-finite intermediate names the node") {
  Graph g;
  Var a = g.constant(Mat::Constant(1, 1, 1.0));
  Var b = g.constant(Mat::Constant(1, 1, 0.0), "den");
  Var c = g.div(a, b);
  CHECK_THROWS_AS((void)g.eval(c), NumericError);
  try {
    (void)g.eval(c);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("node #") != std::string::npos);
  }
}

TEST_CASE("backward before forward is a usage error") {
  Graph g;
  Var x = g.input(1, 1, "x");
  Var y = g.mul(x, x);
  CHECK_THROWS_AS((void)g.backward(y), UsageError);
}

TEST_CASE("d(x*x)/dx at 3 is 6") {
  Graph g;
  Var x = g.input(1, 1, "x");
  Var y = g.mul(x, x);
  g.bind(x, Mat::Constant(1, 1, 3.0));
  g.eval(y);
  auto grads = g.backward(y);
  CHECK(grads.at("x")(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("sum reduction sends 1 to every element") {
  Graph g;
  Var x = g.input(3, 2, "x");
  Var y = g.sum_all(x);
  g.bind(x, Mat::Random(3, 2));
  g.eval(y);
  auto grads = g.backward(y);
  CHECK((grads.at("x") - Mat::Ones(3, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unused leaves get zero gradients") {
  Graph g;
  Var x = g.input(1, 1, "x");
  Var z = g.input(2, 2, "unused");
  Var y = g.mul(x, x);
  g.bind(x, Mat::Constant(1, 1, 2.0));
  g.bind(z, Mat::Ones(2, 2));
  g.eval(y);
  auto grads = g.backward(y);
  CHECK(grads.at("unused").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-layer tanh net gradients match finite differences") {
  const int in = 3, h = 4, out = 2;
  const int np = h * (in + 1) + out * (h + 1);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  Vec t0(np);
  for (int i = 0; i < np; ++i) t0[i] = u(rng);
  Mat X = Mat::NullaryExpr(5, in, [&](Eigen::Index, Eigen::Index) { return u(rng); });

  auto make = [&](const Vec& t) {
    auto g = std::make_unique<Graph>();
    Var theta = g->input(np, 1, "theta");
    g->bind(theta, t);
    Var W1 = g->reshape_slice(theta, 0, h, in);
    Var b1 = g->reshape_slice(theta, h * in, 1, h);
    Var W2 = g->reshape_slice(theta, h * (in + 1), out, h);
    Var b2 = g->reshape_slice(theta, h * (in + 1) + out * h, 1, out);
    Var Xv = g->constant(X);
    Var a1 = g->activation(g->add_bias(g->matmul(Xv, W1, false, true), b1), Activation::Tanh);
    Var y = g->add_bias(g->matmul(a1, W2, false, true), b2);
    Var l = g->mean_all(g->mul(y, y));
    return std::pair{std::move(g), l};
  };

  auto [g, l] = make(t0);
  g->eval(l);
  auto grads = g->backward(l);
  Vec adg = grads.at("theta");

  Vec fd = fd_gradient(
      [&](const Vec& t) {
        auto [gg, ll] = make(t);
        return gg->eval(ll)(0, 0);
      },
      t0);

  for (int i = 0; i < np; ++i) CHECK(rel_err(adg[i], fd[i]) < 1e-6);
}

TEST_CASE("activation derivative tables match finite differences") {
  for (auto act : {Activation::Tanh, Activation::ELU, Activation::Sigmoid}) {
    for (double x0 : {-1.3, -0.2, 0.4, 1.7}) {
      const double fd =
          (ad::act_value(act, x0 + 1e-6, 0) - ad::act_value(act, x0 - 1e-6, 0)) / 2e-6;
      CHECK(std::abs(ad::act_value(act, x0, 1) - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
      const double fd2 =
          (ad::act_value(act, x0 + 1e-5, 1) - ad::act_value(act, x0 - 1e-5, 1)) / 2e-5;
      CHECK(std::abs(ad::act_value(act, x0, 2) - fd2) < 1e-4 * std::max(1.0, std::abs(fd2)));
    }
  }
  // ReLU away from the kink (distance > 1e-3)
  for (double x0 : {-0.5, 0.5}) {
    const double fd =
        (ad::act_value(Activation::ReLU, x0 + 1e-6, 0) -
         ad::act_value(Activation::ReLU, x0 - 1e-6, 0)) /
        2e-6;
    CHECK(std::abs(ad::act_value(Activation::ReLU, x0, 1) - fd) < 1e-9);
  }
}

TEST_CASE("replay determinism: same tape and inputs are bit-identical") {
  Graph g;
  Var x = g.input(4, 3, "x");
  Var W = g.constant(Mat::Random(5, 3));
  Var y = g.activation(g.matmul(x, W, false, true), Activation::Tanh);
  Var l = g.mean_all(g.mul(y, y));
  Mat X = Mat::Random(4, 3);
  g.bind(x, X);
  Mat v1 = g.eval(l);
  g.bind(x, X);
  Mat v2 = g.eval(l);
  CHECK(std::memcmp(v1.data(), v2.data(), sizeof(double)) == 0);
}

TEST_CASE("max reduction routes the gradient to the first argmax") {
  Graph g;
  Var x = g.input(4, 1, "x");
  Var m = g.seg_max(x, 4);
  g.bind(x, (Mat(4, 1) << 1.0, 3.0, 3.0, 2.0).finished());
  g.eval(m);
  auto grads = g.backward(m);
  Mat expect(4, 1);
  expect << 0, 1, 0, 0;  // ties break to the lowest index
  CHECK((grads.at("x") - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("matmul transpose flags all satisfy the finite-difference check") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const int m = 3, k = 2, n = 4;
      Mat A0 = Mat::NullaryExpr(ta ? k : m, ta ? m : k,
                                [&](Eigen::Index, Eigen::Index) { return u(rng); });
      Mat B0 = Mat::NullaryExpr(tb ? n : k, tb ? k : n,
                                [&](Eigen::Index, Eigen::Index) { return u(rng); });
      Mat S = Mat::NullaryExpr(m, n, [&](Eigen::Index, Eigen::Index) { return u(rng); });

      auto value = [&](const Mat& A, const Mat& B) {
        Graph g;
        Var av = g.constant(A);
        Var bv = g.constant(B);
        Var c = g.matmul(av, bv, ta, tb);
        Var l = g.sum_all(g.mul(c, g.constant(S)));
        return g.eval(l)(0, 0);
      };

      Graph g;
      Var av = g.input(int(A0.rows()), int(A0.cols()), "A");
      Var bv = g.input(int(B0.rows()), int(B0.cols()), "B");
      Var c = g.matmul(av, bv, ta, tb);
      Var l = g.sum_all(g.mul(c, g.constant(S)));
      g.bind(av, A0);
      g.bind(bv, B0);
      g.eval(l);
      auto grads = g.backward(l);

      const double h = 1e-6;
      for (int i = 0; i < A0.rows(); ++i)
        for (int j = 0; j < A0.cols(); ++j) {
          Mat Ap = A0, Am = A0;
          Ap(i, j) += h;
          Am(i, j) -= h;
          CHECK(grads.at("A")(i, j) ==
                doctest::Approx((value(Ap, B0) - value(Am, B0)) / (2 * h)).epsilon(1e-6));
        }
      for (int i = 0; i < B0.rows(); ++i)
        for (int j = 0; j < B0.cols(); ++j) {
          Mat Bp = B0, Bm = B0;
          Bp(i, j) += h;
          Bm(i, j) -= h;
          CHECK(grads.at("B")(i, j) ==
                doctest::Approx((value(A0, Bp) - value(A0, Bm)) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("tangent pass linearizes matmul and activations") {
  Graph g;
  Var x = g.input(2, 2, "x");
  Var W = g.constant(Mat::Random(3, 2));
  Var y = g.activation(g.matmul(x, W, false, true), Activation::Tanh);
  Var s = g.sum_all(y);
  Mat X0 = Mat::Random(2, 2);
  g.bind(x, X0);
  g.eval(s);
  Mat dir = Mat::Random(2, 2);
  const Mat dt = g.tangent(s, {{x, dir}});
  const double h = 1e-6;
  g.bind(x, X0 + h * dir);
  const double fp = g.eval(s)(0, 0);
  g.bind(x, X0 - h * dir);
  const double fm = g.eval(s)(0, 0);
  CHECK(dt(0, 0) == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("recorded gradients of gradients: hessian of a quadratic") {
  // f(x) = 0.5 * sum x_i^2  =>  grad = x, and d(sum grad)/dx = ones
  Graph g;
  Var x = g.input(3, 1, "x");
  Var f = g.scale(g.sum_all(g.mul(x, x)), 0.5);
  Var wrt[] = {x};
  Var grad = g.record_gradients(f, wrt)[0];
  Var gsum = g.sum_all(grad);
  Var hess = g.record_gradients(gsum, wrt)[0];
  g.bind(x, (Mat(3, 1) << 1.0, -2.0, 0.5).finished());
  g.eval(hess);
  CHECK((g.value(grad) - (Mat(3, 1) << 1.0, -2.0, 0.5).finished()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.value(hess) - Mat::Ones(3, 1)).cwiseAbs().maxCoeff() == 0.0);
}

// ---------------------------------------------------------------------------
// ADAM

TEST_CASE("adam leaves parameters unchanged for zero gradients") {
  Vec p = Vec::Constant(4, 1.5);
  AdamState st(4);
  adam_step(p, Vec::Zero(4), st);
  CHECK((p - Vec::Constant(4, 1.5)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step matches the bias-corrected hand value") {
  Vec p = Vec::Zero(1);
  AdamState st(1, LrSchedule{1e-3, 1e-3, 1});
  Vec grad = Vec::Constant(1, 1.0);
  adam_step(p, grad, st);
  // mhat = 1, uhat = 1 -> delta = -lr / (1 + eps)
  CHECK(p[0] == doctest::Approx(-1e-3 * (1.0 / (1.0 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("linear schedule hits the midpoint") {
  LrSchedule s{1e-3, 1e-5, 1000};
  CHECK(s.at(500) == doctest::Approx((1e-3 + 1e-5) / 2));
  CHECK(s.at(0) == doctest::Approx(1e-3));
  CHECK(s.at(2000) == doctest::Approx(1e-5));
}

TEST_CASE("adam refuses non-finite gradients") {
  Vec p = Vec::Zero(2);
  AdamState st(2);
  Vec g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(p, g, st), NumericError);
}
