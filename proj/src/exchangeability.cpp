#include "sympde/exchangeability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sympde {

Permutation Permutation::identity(int N) {
  Permutation p;
  p.idx.resize(N);
  std::iota(p.idx.begin(), p.idx.end(), 0);
  return p;
}

Permutation Permutation::random(int N, const CounterRng& rng, uint64_t c0, uint64_t c1) {
  Permutation p = identity(N);
  for (int i = N - 1; i > 0; --i) {  // Fisher-Yates with counter draws
    const int j = int(rng.uniform_index(uint64_t(i) + 1, c0, c1, uint64_t(i), 0x70));
    std::swap(p.idx[i], p.idx[j]);
  }
  return p;
}

bool Permutation::valid() const {
  std::vector<char> seen(idx.size(), 0);
  for (int v : idx) {
    if (v < 0 || v >= int(idx.size()) || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

Permutation Permutation::then(const Permutation& other) const {
  if (idx.size() != other.idx.size()) throw ShapeError("Permutation::then: size mismatch");
  Permutation out;
  out.idx.resize(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out.idx[i] = other.idx[idx[i]];
  return out;
}

Mat permute_vector(const Mat& X, const Permutation& pi) {
  if (int(X.rows()) != pi.size()) throw ShapeError("permute_vector: length mismatch");
  if (!pi.valid()) throw ShapeError("permute_vector: not a permutation");
  Mat out(X.rows(), X.cols());
  for (int i = 0; i < pi.size(); ++i) out.row(i) = X.row(pi.idx[i]);
  return out;
}

Mat permute_matrix(const Mat& M, int N, int br, int bc, const Permutation& pi) {
  if (int(M.rows()) != N * br || int(M.cols()) != N * bc)
    throw ShapeError("permute_matrix: block layout mismatch");
  if (pi.size() != N || !pi.valid()) throw ShapeError("permute_matrix: bad permutation");
  Mat out(M.rows(), M.cols());
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      out.block(i * br, j * bc, br, bc) = M.block(pi.idx[i] * br, pi.idx[j] * bc, br, bc);
  return out;
}

double check_exchangeable(const std::function<double(const Mat&)>& f, int N, int d,
                          int n_samples, int n_perms, const CounterRng& rng) {
  if (n_samples < 1 || n_perms < 1)
    throw ConfigError("check_exchangeable: need n_samples, n_perms >= 1");
  double worst = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    Mat X(N, d);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < d; ++j) X(i, j) = rng.normal(uint64_t(s), uint64_t(i), uint64_t(j), 0x71);
    const double fx = f(X);
    for (int p = 0; p < n_perms; ++p) {
      const Permutation pi = Permutation::random(N, rng, uint64_t(s), uint64_t(p));
      worst = std::max(worst, std::abs(fx - f(permute_vector(X, pi))));
    }
  }
  return worst;
}

Vec lemma_gradient_construct(const std::function<Mat(const Mat&)>& grad_w, const Mat& X,
                             const Vec& x) {
  const int N = int(X.rows());
  const int d = int(X.cols());
  if (N > 10) throw ConfigError("lemma_gradient_construct: refused for N > 10 (2^N cost)");
  if (int(x.size()) != d) throw ShapeError("lemma_gradient_construct: query dimension mismatch");

  Vec acc = Vec::Zero(d);
  // subsets S of {0..N-1}, |S| = p+1; tuple = (x repeated p times, x_j for j not in S)
  for (uint32_t mask = 1; mask < (1u << N); ++mask) {
    const int p = __builtin_popcount(mask) - 1;
    std::vector<Vec> tuple;
    tuple.reserve(N - 1);
    for (int r = 0; r < p; ++r) tuple.push_back(x);
    for (int j = 0; j < N; ++j)
      if (!(mask & (1u << j))) tuple.push_back(X.row(j).transpose());

    // sum over insertion slots of the derivative at the inserted point
    Vec inner = Vec::Zero(d);
    Mat full(N, d);
    for (int slot = 0; slot < N; ++slot) {
      int r = 0;
      for (int i = 0; i < N; ++i) {
        if (i == slot) full.row(i) = x.transpose();
        else full.row(i) = tuple[r++].transpose();
      }
      inner += grad_w(full).row(slot).transpose();
    }
    acc += (p % 2 == 0 ? 1.0 : -1.0) * inner;
  }
  return acc / double(N);
}

}  // namespace sympde
