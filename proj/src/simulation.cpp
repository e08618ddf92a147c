#include "sympde/simulation.hpp"

#include <cmath>
#include <fstream>

namespace sympde {

namespace {
// counter word 3 packs purpose | step | slot so streams never collide
enum Purpose : uint64_t { kInit = 1, kIncrement = 2, kCommon = 3, kMixture = 4, kLaw = 5 };

uint64_t word3(Purpose p, uint64_t step, uint64_t slot) {
  return (uint64_t(p) << 56) | (step << 32) | slot;
}
}  // namespace

TimeGrid TimeGrid::uniform(double t0, double T, int steps) {
  if (steps < 1 || T <= t0) throw ConfigError("TimeGrid: need steps >= 1 and T > t0");
  TimeGrid g;
  g.knots.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) g.knots[k] = t0 + (T - t0) * double(k) / steps;
  g.knots[steps] = T;
  return g;
}

std::pair<Vec, Vec> empirical_moments(const Mat& X) {
  if (X.rows() < 1) throw ConfigError("empirical_moments: need at least one point");
  Vec mean = X.colwise().mean();
  Mat centered = X.rowwise() - mean.transpose();
  Vec var = centered.array().square().colwise().mean();
  return {mean, var};
}

Mat euler_step(const Coefficients& c, double t, double dt, const Mat& X, const Mat& dWi,
               const Mat& dW0) {
  const int rows = int(X.rows());
  const int N = c.N, d = c.d;
  if (rows % N != 0) throw ShapeError("euler_step: rows not a multiple of N");
  if (dWi.rows() != rows || dWi.cols() != d) throw ShapeError("euler_step: bad dWi shape");
  const int B = rows / N;

  Mat out = X;
  for (int b = 0; b < B; ++b) {
    const Mat Xb = X.middleRows(b * N, N);
    Mat inc = Mat::Zero(N, d);
    if (c.drift) inc += c.drift(t, Xb) * dt;
    if (c.sigma_diag) {
      const Mat sd = c.sigma_diag(t, Xb);  // N x (d*d), row-major blocks
      if (d == 1) {
        inc += sd.cwiseProduct(dWi.middleRows(b * N, N));
      } else {
        for (int i = 0; i < N; ++i) {
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
              blk(sd.row(i).data(), d, d);
          inc.row(i) += (blk * dWi.row(b * N + i).transpose()).transpose();
        }
      }
    }
    if (c.sigma_offdiag) {
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          if (i == j) continue;
          const Mat sij = c.sigma_offdiag(t, Xb, i, j);  // d x d
          inc.row(i) += (sij * dWi.row(b * N + j).transpose()).transpose();
        }
    }
    if (c.sigma_common && c.q > 0) {
      const Mat s0 = c.sigma_common(t, Xb);  // N x (d*q)
      for (int i = 0; i < N; ++i) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            blk(s0.row(i).data(), d, c.q);
        inc.row(i) += (blk * dW0.row(b).transpose()).transpose();
      }
    }
    out.middleRows(b * N, N) += inc;
  }
  if (!out.allFinite()) throw NumericError("euler_step: non-finite state");
  return out;
}

InitialSampler deterministic_initial(const Vec& point, int N) {
  return [point, N](const CounterRng&, uint64_t, uint64_t) {
    return Mat(point.transpose().replicate(N, 1));
  };
}

InitialSampler gaussian_initial(double mean, double stddev, int N) {
  return [mean, stddev, N](const CounterRng& rng, uint64_t batch_id, uint64_t sample) {
    Mat X(N, 1);
    for (int i = 0; i < N; ++i)
      X(i, 0) = mean + stddev * rng.normal(batch_id, sample, i, word3(kInit, 0, 0));
    return X;
  };
}

InitialSampler randomized_initial_law(double mean_lo, double mean_hi, double std_lo,
                                      double std_hi, int N) {
  if (mean_lo > mean_hi || std_lo > std_hi)
    throw ConfigError("randomized_initial_law: ranges must be ordered");
  return [=](const CounterRng& rng, uint64_t batch_id, uint64_t sample) {
    const double m = rng.uniform(mean_lo, mean_hi, batch_id, sample, 0, word3(kLaw, 0, 0));
    const double s = rng.uniform(std_lo, std_hi, batch_id, sample, 0, word3(kLaw, 0, 1));
    Mat X(N, 1);
    for (int i = 0; i < N; ++i)
      X(i, 0) = m + s * rng.normal(batch_id, sample, i, word3(kInit, 0, 0));
    return X;
  };
}

PathBatch simulate_batch(const Coefficients& c, const TimeGrid& grid,
                         const InitialSampler& initial, int batch, const CounterRng& rng,
                         uint64_t batch_id, int until_step) {
  if (batch < 1) throw ConfigError("simulate_batch: batch must be >= 1");
  const int steps = until_step < 0 ? grid.steps() : std::min(until_step, grid.steps());
  const int N = c.N, d = c.d, q = c.q;

  PathBatch pb;
  pb.batch = batch;
  pb.N = N;
  pb.d = d;
  pb.q = q;
  pb.grid = grid;
  pb.seed = rng.seed();
  pb.stream = rng.stream();
  pb.states.resize(steps + 1);
  pb.dWi.resize(steps);
  pb.dW0.resize(steps);

  Mat X0(batch * N, d);
  for (int b = 0; b < batch; ++b) {
    Mat xb = initial(rng, batch_id, uint64_t(b));
    if (xb.rows() != N || xb.cols() != d) throw ShapeError("simulate_batch: bad initial shape");
    X0.middleRows(b * N, N) = xb;
  }
  pb.states[0] = std::move(X0);

  for (int k = 0; k < steps; ++k) {
    const double sdt = std::sqrt(grid.dt(k));
    Mat dWi(batch * N, d);
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < d; ++j)
          dWi(b * N + i, j) =
              sdt * rng.normal(batch_id, uint64_t(b), uint64_t(i),
                               word3(kIncrement, uint64_t(k), uint64_t(j)));
    Mat dW0(batch, std::max(q, 1));
    if (q > 0) {
      for (int b = 0; b < batch; ++b)
        for (int j = 0; j < q; ++j)
          dW0(b, j) = sdt * rng.normal(batch_id, uint64_t(b), 0,
                                       word3(kCommon, uint64_t(k), uint64_t(j)));
    } else {
      dW0.setZero();
    }
    pb.states[k + 1] = euler_step(c, grid.t(k), grid.dt(k), pb.states[k], dWi, dW0);
    pb.dWi[k] = std::move(dWi);
    pb.dW0[k] = std::move(dW0);
  }
  return pb;
}

MixtureSpec sample_mixture_spec(const MixtureBounds& bounds, const CounterRng& rng, uint64_t c0,
                                uint64_t c1) {
  if (bounds.L_max < 1 || bounds.mu_max <= 0 || bounds.sigma2_max <= 0)
    throw ConfigError("sample_mixture_spec: bounds must be positive");
  const int L = 1 + int(rng.uniform_index(uint64_t(bounds.L_max), c0, c1, 0, word3(kMixture, 0, 0)));
  MixtureSpec mix;
  mix.weights.resize(L);
  mix.means.resize(L);
  mix.variances.resize(L);
  double total = 0.0;
  for (int l = 0; l < L; ++l) {
    mix.weights[l] = rng.uniform(c0, c1, uint64_t(l), word3(kMixture, 0, 1));
    mix.means[l] =
        rng.uniform(-bounds.mu_max, bounds.mu_max, c0, c1, uint64_t(l), word3(kMixture, 0, 2));
    const double v =
        rng.uniform(0.0, bounds.sigma2_max, c0, c1, uint64_t(l), word3(kMixture, 0, 3));
    mix.variances[l] = std::max(v, 1e-4 * bounds.sigma2_max);
    total += mix.weights[l];
  }
  for (double& w : mix.weights) w /= total;
  return mix;
}

Mat sample_mixture(const MixtureSpec& mix, int n_points, const CounterRng& rng, uint64_t c0,
                   uint64_t c1) {
  const int L = int(mix.weights.size());
  Mat X(n_points, 1);
  for (int i = 0; i < n_points; ++i) {
    const double u = rng.uniform(c0, c1, uint64_t(i), word3(kMixture, 1, 0));
    int comp = L - 1;
    double acc = 0.0;
    for (int l = 0; l < L; ++l) {
      acc += mix.weights[l];
      if (u <= acc) {
        comp = l;
        break;
      }
    }
    X(i, 0) = mix.means[comp] + std::sqrt(mix.variances[comp]) *
                                    rng.normal(c0, c1, uint64_t(i), word3(kMixture, 1, 1));
  }
  return X;
}

void dump_paths(const PathBatch& paths, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("dump_paths: cannot open '" + path + "'");
  f << "# sample step particle components...\n";
  for (size_t k = 0; k < paths.states.size(); ++k)
    for (int b = 0; b < paths.batch; ++b)
      for (int i = 0; i < paths.N; ++i) {
        f << b << ' ' << k << ' ' << i;
        for (int j = 0; j < paths.d; ++j) f << ' ' << paths.states[k](b * paths.N + i, j);
        f << '\n';
      }
}

}  // namespace sympde
