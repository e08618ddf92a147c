#pragma once

#include "sympde/adam.hpp"
#include "sympde/networks.hpp"
#include "sympde/simulation.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>

namespace sympde {

/// Handed to driver builders. Xk is an input node holding the (possibly
/// truncated) states; derived() registers a per-batch constant computed from
/// the raw states and rebound before every evaluation. gamma/gamma_clamped are
/// only valid for fully nonlinear drivers.
struct BatchConsts {
  ad::Var Xk;
  ad::Var gamma;          // (B*N) x (d*d) second-derivative diagonal blocks
  ad::Var gamma_clamped;  // same with the configured floor applied
  int N = 1, d = 1, B = 1;
  double t = 0.0, dt = 0.0;
  std::function<ad::Var(std::function<Mat(const Mat&)>, int rows, int cols)> derived;
};

using SemilinearDriver =
    std::function<ad::Var(ad::Graph&, const BatchConsts&, ad::Var y, ad::Var Z)>;
using FullyNonlinearDriver =
    std::function<ad::Var(ad::Graph&, const BatchConsts&, ad::Var y, ad::Var Z)>;

enum class DriverForm { Semilinear, FullyNonlinear };

struct ProblemSpec {
  std::string name;
  int N = 1, d = 1, q = 0;
  double T = 1.0;
  Coefficients coeffs;  // training forward process
  DriverForm form = DriverForm::Semilinear;
  SemilinearDriver H;        // semilinear driver
  FullyNonlinearDriver F;    // fully nonlinear residual driver (reads consts.gamma*)
  std::function<Vec(const Mat&, int)> terminal;        // per-sample G on stacked rows
  std::function<Mat(const Mat&, int)> terminal_grad;   // DG rows, optional
  std::function<Mat(const Mat&, int)> terminal_gamma;  // diag blocks of D(DG), optional
  InitialSampler initial;                              // training initial law
  InitialSampler report_initial;                       // reporting configuration, defaults to initial
  double reference = std::numeric_limits<double>::quiet_NaN();
  std::function<double(double, const Mat&)> ref_value;       // v(t, X), X is N x d
  std::function<Mat(double, const Mat&)> ref_gradient;       // Dv rows
  std::function<double(double, double, double)> lions_ref;   // dmu v(t, mean)(x), d = 1
  std::function<double(double, double, double, double)> feedback;  // a*(t, x, mean, z)
  std::function<double(double, double, double, double)> controlled_drift;  // beta(t, x, mean, a)
};

enum class ZKind { SecondNetAD, SingleNetAD, DeepDerSet };

struct SolveConfig {
  int NT = 10;
  double t0 = 0.0;  // solve on [t0, T]
  int batch = 200;
  int first_step_iters = 2000;
  int step_iters = 400;
  int epoch_iters = 100;  // validation cadence (gradient iterations per inner epoch)
  double early_stop = 0.0;  // stop a step once validation drops below; 0 disables
  int val_samples = 1000;
  double lr_first = 1e-3, lr_later = 5e-4, lr_final = 1e-5;
  int runs = 1;
  uint64_t seed = 0;
  double quantile = 1.0;     // forward-sample truncation; 1 = identity
  double gamma_floor = 1e-3;
  bool warm_start = true;
  int terminal_projection_iters = 0;  // > 0 fits the terminal gradient net to FD of G
  SymmetricNetSpec value_net;
  DerivativeNetSpec deriv_net;
  ZKind z_kind = ZKind::SecondNetAD;
  int threads = 0;  // parallel runs; 0 = min(runs, hardware)
  int report_samples = 128;
};

struct StepNets {
  NetParams value;
  std::optional<NetParams> deriv;
  double train_loss = 0.0, val_before = 0.0, val_after = 0.0;
  long iters_used = 0;
};

struct StepSolution {
  std::vector<StepNets> steps;  // index k = 0 .. NT-1
};

struct RunResult {
  int run = 0;
  double U0 = 0.0, Z0_mean = 0.0, Z0_norm = 0.0, wall_s = 0.0;
  StepSolution solution;
};

struct RunReport {
  std::vector<RunResult> runs;
  double mean = 0.0, stddev = 0.0;
  double reference = std::numeric_limits<double>::quiet_NaN();
  double rel_error = std::numeric_limits<double>::quiet_NaN();
};

/// One simulated transition: states at t_k and t_{k+1} plus the increments
/// that produced them.
struct BatchSlice {
  Mat Xk, Xk1;  // (B*N) x d
  Mat dWi;      // (B*N) x d
  Mat dW0;      // B x q (zero column when q = 0)
  double t = 0.0, dt = 0.0;
};

/// sum_j sigma_ij dW^j + sigma_i0 dW^0 contracted per particle row.
Mat martingale_coefficients(const Coefficients& c, double t, const Mat& Xk, const Mat& dWi,
                            const Mat& dW0);

/// Componentwise clamp of the rows to their empirical [1-q, q] quantiles.
Mat clamp_to_quantiles(const Mat& X, double q);

/// Quadratic one-step losses (evaluation only; the trainer uses the same graph).
/// `target` holds the frozen next-step values per sample; `gamma_diag` the
/// frozen second-derivative blocks at X_{k+1} for the fully nonlinear form.
double loss_semilinear(const ProblemSpec& pr, const BatchSlice& slice,
                       const SymmetricNetSpec& uspec, const NetParams& u,
                       const DerivativeNetSpec& zspec, const NetParams& z, const Vec& target);
double loss_fullynonlinear(const ProblemSpec& pr, const BatchSlice& slice,
                           const SymmetricNetSpec& uspec, const NetParams& u,
                           const DerivativeNetSpec& zspec, const NetParams& z, const Vec& target,
                           const Mat& gamma_diag, double gamma_floor);

RunReport solve_semilinear(const ProblemSpec& pr, const SolveConfig& cfg);
RunReport solve_fullynonlinear(const ProblemSpec& pr, const SolveConfig& cfg);
/// Backward scheme with per-step Wasserstein exploration: states at t_k are
/// redrawn per batch element from fresh random Gaussian mixtures.
RunReport solve_with_exploration(const ProblemSpec& pr, const SolveConfig& cfg,
                                 const MixtureBounds& bounds);

/// a*(t, x_i, mean(X), N * Z(X, x_i)).
double feedback_control(const ProblemSpec& pr, const DerivativeNetSpec& zspec,
                        const NetParams& z, double t, const Mat& X, int i);

struct PolicyInduction {
  struct Field {
    double t;
    Vec x, a;  // sampled control field, sorted by x
  };
  std::vector<Field> fields;
  std::vector<double> mean_path, var_path;  // induced-trajectory statistics per knot
  RunReport last_report;
};

/// Optimal-control approximation by forward induction: solve, replace the
/// drift at t_0..t_j with the learned feedback, advance, repeat.
PolicyInduction policy_forward_induction(const ProblemSpec& pr, const SolveConfig& cfg);

struct LionsTable {
  double t;
  Vec x, analytic, scaled_net;  // sorted by x; scaled_net = N * Z(X, x_i)
};

/// Per-time comparison tables of the learned measure derivative against the
/// problem's reference, evaluated on fresh forward samples.
std::vector<LionsTable> lions_tables(const ProblemSpec& pr, const SolveConfig& cfg,
                                     const StepSolution& sol, const std::vector<double>& times);

}  // namespace sympde
