#pragma once

#include "sympde/rng.hpp"

#include <functional>
#include <vector>

namespace sympde {

/// Bijection on {0..N-1}; pi[x] reindexes rows as (x_{pi(i)})_i.
struct Permutation {
  std::vector<int> idx;

  static Permutation identity(int N);
  static Permutation random(int N, const CounterRng& rng, uint64_t c0, uint64_t c1);
  bool valid() const;
  int size() const { return int(idx.size()); }
  /// (this o other)(i) = other(this(i)); matches pi[rho[x]] row reindexing.
  Permutation then(const Permutation& other) const;
};

/// Rows reindexed by pi: out.row(i) = X.row(pi(i)).
Mat permute_vector(const Mat& X, const Permutation& pi);

/// Block matrix reindexed by pi on both axes: out block (i,j) = in block
/// (pi(i), pi(j)); M is (N*br) x (N*bc).
Mat permute_matrix(const Mat& M, int N, int br, int bc, const Permutation& pi);

/// Max over random (X, pi) of |f(X) - f(pi[X])|.
double check_exchangeable(const std::function<double(const Mat&)>& f, int N, int d,
                          int n_samples, int n_perms, const CounterRng& rng);

/// D-exchangeable gradient reconstruction by the telescopic alternating sum
/// over particle subsets. `grad_w(X)` must return all partials D_{x_i} w(X)
/// as N x d rows. Exponential cost; refused for N > 10.
Vec lemma_gradient_construct(const std::function<Mat(const Mat&)>& grad_w, const Mat& X,
                             const Vec& x);

}  // namespace sympde
