#pragma once

#include "sympde/graph.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sympde {

enum class Pooling { Sum, Mean, Max };

const char* pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);

/// Plain multilayer perceptron: in -> hidden... -> out, hidden layers share the
/// activation, output layer is affine.
struct FeedforwardSpec {
  int in = 1;
  std::vector<int> hidden;
  int out = 1;
  ad::Activation act = ad::Activation::ReLU;
};

/// psi(pool_i phi(x_i)) with x_i in R^d. With time_augmented, psi reads
/// (t, pooled) so its input width is k+1.
struct SymmetricNetSpec {
  int d = 1;
  int k = 64;
  int out = 1;
  std::vector<int> phi_hidden{32, 32, 64};
  std::vector<int> psi_hidden{64, 32};
  ad::Activation act = ad::Activation::ReLU;
  Pooling pooling = Pooling::Mean;
  bool time_augmented = false;

  FeedforwardSpec phi() const { return {d, phi_hidden, k, act}; }
  FeedforwardSpec psi() const { return {k + (time_augmented ? 1 : 0), psi_hidden, out, act}; }
};

enum class DerivKind { DeepDerSet, ADDeepSet, Feedforward };

/// Gradient approximators. DeepDerSet evaluates psi(pool, x); ADDeepSet is the
/// input-gradient of the referenced symmetric net; Feedforward maps the whole
/// flattened configuration. output_scale multiplies the raw network output
/// (used to keep per-particle gradients at their natural 1/N magnitude while
/// the network itself works at measure scale).
struct DerivativeNetSpec {
  DerivKind kind = DerivKind::ADDeepSet;
  SymmetricNetSpec base;  // ADDeepSet: the underlying net; DeepDerSet: phi/psi dims
  double output_scale = 1.0;

  FeedforwardSpec derset_phi() const { return {base.d, base.phi_hidden, base.k, base.act}; }
  FeedforwardSpec derset_psi() const {
    return {base.k + base.d, base.psi_hidden, base.d, base.act};
  }
};

/// Flat parameter vector plus the per-layer slice map.
struct NetParams {
  struct Slice {
    int w_offset, b_offset, in, out;
  };
  Vec flat;
  std::vector<Slice> layers;
};

int param_count(const FeedforwardSpec& spec);
int param_count(const SymmetricNetSpec& spec);
int param_count(const DerivativeNetSpec& spec);

/// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
NetParams build(const FeedforwardSpec& spec, uint64_t seed);
NetParams build(const SymmetricNetSpec& spec, uint64_t seed);
NetParams build(const DerivativeNetSpec& spec, uint64_t seed);

// ---- graph builders (batched; X holds B*N particle rows) ----

/// Appends the MLP applied row-wise to X; theta_offset points at the first
/// layer's weights inside the flat parameter leaf.
ad::Var feedforward_graph(ad::Graph& g, const FeedforwardSpec& spec, ad::Var theta,
                          int theta_offset, ad::Var X);

/// DeepSet / PointNet / time-augmented forward: returns B x out.
/// `time` (B x 1) is required iff spec.time_augmented.
ad::Var symmetric_graph(ad::Graph& g, const SymmetricNetSpec& spec, ad::Var theta, ad::Var X,
                        int N, std::optional<ad::Var> time = std::nullopt);

/// DeepDerSet rows: psi(pooled, x_i) for every particle row; returns (B*N) x d.
ad::Var deepderset_graph(ad::Graph& g, const DerivativeNetSpec& spec, ad::Var theta, ad::Var X,
                         int N);

/// Input-gradient rows of a symmetric net, recorded on the same tape:
/// row i = D_{x_i} U(X). Returns (B*N) x d.
ad::Var ad_gradient_graph(ad::Graph& g, const SymmetricNetSpec& spec, ad::Var theta, ad::Var X,
                          int N);

// ---- single-configuration evaluation (N x d input) ----

Vec deepset_forward(const SymmetricNetSpec& spec, const NetParams& params, const Mat& X);
Vec pointnet_forward(const SymmetricNetSpec& spec, const NetParams& params, const Mat& X);
Vec time_deepset_forward(const SymmetricNetSpec& spec, const NetParams& params, double t,
                         const Mat& X);
Vec deepderset_forward(const DerivativeNetSpec& spec, const NetParams& params, const Mat& X,
                       const Vec& x);
Mat ad_deepset_gradient(const SymmetricNetSpec& spec, const NetParams& params, const Mat& X);
Vec feedforward_forward(const FeedforwardSpec& spec, const NetParams& params, const Vec& x);

/// Derivative-net evaluation at every particle: row i = Z(X, x_i), including
/// output_scale. X may stack several configurations of N rows each.
Mat derivative_rows(const DerivativeNetSpec& spec, const NetParams& params, const Mat& X, int N);

/// Total diagonal derivative blocks of the derivative map: row i holds
/// d Z(X, x_i) / d x_i as a row-major d x d block, x_i varying jointly in the
/// x-slot and inside X. Refuses ReLU anywhere on the differentiated path.
Mat z_diag_derivative(const DerivativeNetSpec& spec, const NetParams& params, const Mat& X, int N);

// ---- checkpoints ----

void save_net(const std::string& path, const std::string& kind_header, const Vec& flat);
Vec load_net(const std::string& path, std::string* kind_header = nullptr);

}  // namespace sympde
