#pragma once

#include "sympde/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sympde {

/// Interacting-particle coefficients. drift maps (t, X[N x d]) to N x d.
/// sigma_diag returns per-particle d x d blocks flattened row-major into an
/// N x (d*d) matrix; sigma_common returns d x q blocks as N x (d*q).
/// sigma_offdiag(t, X, i, j) covers i != j couplings and may be absent.
struct Coefficients {
  int N = 1, d = 1, q = 0;
  std::function<Mat(double, const Mat&)> drift;
  std::function<Mat(double, const Mat&)> sigma_diag;
  std::function<Mat(double, const Mat&, int, int)> sigma_offdiag;
  std::function<Mat(double, const Mat&)> sigma_common;
};

struct TimeGrid {
  std::vector<double> knots;  // t_0 = start < ... < t_{NT} = T

  static TimeGrid uniform(double t0, double T, int steps);
  int steps() const { return int(knots.size()) - 1; }
  double dt(int k) const { return knots[k + 1] - knots[k]; }
  double t(int k) const { return knots[k]; }
  double horizon() const { return knots.back(); }
};

/// Simulated trajectories plus the increments that generated them.
/// states[k] stacks the batch: sample b occupies rows [b*N, (b+1)*N).
struct PathBatch {
  int batch = 0, N = 0, d = 1, q = 0;
  TimeGrid grid;
  std::vector<Mat> states;  // steps+1 entries, (batch*N) x d
  std::vector<Mat> dWi;     // steps entries, (batch*N) x d
  std::vector<Mat> dW0;     // steps entries, batch x q (empty when q == 0)
  uint64_t seed = 0, stream = 0;
};

/// Gaussian mixture with normalized weights.
struct MixtureSpec {
  std::vector<double> weights, means, variances;
};

struct MixtureBounds {
  int L_max = 1;
  double mu_max = 1.0;
  double sigma2_max = 1.0;
};

/// Componentwise mean and population variance (divide by N) of the rows.
std::pair<Vec, Vec> empirical_moments(const Mat& X);

/// One Euler-Maruyama step for the full batch.
/// dWi is (batch*N) x d, dW0 is batch x q.
Mat euler_step(const Coefficients& c, double t, double dt, const Mat& X, const Mat& dWi,
               const Mat& dW0);

/// Per-sample initial configuration: (rng, batch_id, sample) -> N x d.
using InitialSampler = std::function<Mat(const CounterRng&, uint64_t, uint64_t)>;

InitialSampler deterministic_initial(const Vec& point, int N);
InitialSampler gaussian_initial(double mean, double stddev, int N);
/// Per-sample (mean, std) drawn uniformly from the given ranges, then N iid normals.
InitialSampler randomized_initial_law(double mean_lo, double mean_hi, double std_lo,
                                      double std_hi, int N);

/// Full trajectory simulation; deterministic given (rng key, batch_id).
/// until_step < 0 simulates the whole grid.
PathBatch simulate_batch(const Coefficients& c, const TimeGrid& grid,
                         const InitialSampler& initial, int batch, const CounterRng& rng,
                         uint64_t batch_id = 0, int until_step = -1);

/// Mixture per Gaussian-mixture exploration: component count uniform on
/// {1..L_max}, raw weights U(0,1) then normalized, means U(-mu_max, mu_max),
/// variances U(0, sigma2_max) floored at 1e-4*sigma2_max.
MixtureSpec sample_mixture_spec(const MixtureBounds& bounds, const CounterRng& rng, uint64_t c0,
                                uint64_t c1);
Mat sample_mixture(const MixtureSpec& mix, int n_points, const CounterRng& rng, uint64_t c0,
                   uint64_t c1);

/// Plain-text trajectory dump: one row per (sample, step, particle).
void dump_paths(const PathBatch& paths, const std::string& path);

}  // namespace sympde
