#include "sympde/networks.hpp"

#include <cstring>
#include <fstream>
#include <random>

namespace sympde {

const char* pooling_name(Pooling p) {
  switch (p) {
    case Pooling::Sum: return "sum";
    case Pooling::Mean: return "mean";
    case Pooling::Max: return "max";
  }
  return "?";
}

Pooling pooling_from_name(const std::string& name) {
  if (name == "sum") return Pooling::Sum;
  if (name == "mean") return Pooling::Mean;
  if (name == "max") return Pooling::Max;
  throw ConfigError("unknown pooling '" + name + "'");
}

namespace {

std::vector<std::pair<int, int>> layer_dims(const FeedforwardSpec& s) {
  std::vector<std::pair<int, int>> dims;
  int in = s.in;
  for (int h : s.hidden) {
    dims.emplace_back(in, h);
    in = h;
  }
  dims.emplace_back(in, s.out);
  return dims;
}

void validate(const FeedforwardSpec& s) {
  if (s.in < 1 || s.out < 1) throw ConfigError("feedforward: dimensions must be >= 1");
  for (int h : s.hidden)
    if (h < 1) throw ConfigError("feedforward: hidden widths must be >= 1");
}

int append_layers(const FeedforwardSpec& s, NetParams& p, int offset) {
  for (auto [in, out] : layer_dims(s)) {
    p.layers.push_back({offset, offset + in * out, in, out});
    offset += in * out + out;
  }
  return offset;
}

void init_layers(NetParams& p, size_t first_layer, std::mt19937_64& rng) {
  for (size_t l = first_layer; l < p.layers.size(); ++l) {
    const auto& sl = p.layers[l];
    const double bound = std::sqrt(6.0 / double(sl.in + sl.out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (int i = 0; i < sl.in * sl.out; ++i) p.flat[sl.w_offset + i] = u(rng);
    for (int i = 0; i < sl.out; ++i) p.flat[sl.b_offset + i] = 0.0;
  }
}

}  // namespace

int param_count(const FeedforwardSpec& spec) {
  validate(spec);
  int n = 0;
  for (auto [in, out] : layer_dims(spec)) n += out * (in + 1);
  return n;
}

int param_count(const SymmetricNetSpec& spec) {
  return param_count(spec.phi()) + param_count(spec.psi());
}

int param_count(const DerivativeNetSpec& spec) {
  switch (spec.kind) {
    case DerivKind::ADDeepSet: return param_count(spec.base);
    case DerivKind::DeepDerSet:
      return param_count(spec.derset_phi()) + param_count(spec.derset_psi());
    case DerivKind::Feedforward:
      throw ConfigError("feedforward derivative nets are sized by the caller");
  }
  return 0;
}

NetParams build(const FeedforwardSpec& spec, uint64_t seed) {
  NetParams p;
  const int n = param_count(spec);
  p.flat = Vec::Zero(n);
  append_layers(spec, p, 0);
  std::mt19937_64 rng(seed);
  init_layers(p, 0, rng);
  return p;
}

NetParams build(const SymmetricNetSpec& spec, uint64_t seed) {
  NetParams p;
  p.flat = Vec::Zero(param_count(spec));
  int ofs = append_layers(spec.phi(), p, 0);
  append_layers(spec.psi(), p, ofs);
  std::mt19937_64 rng(seed);
  init_layers(p, 0, rng);
  return p;
}

NetParams build(const DerivativeNetSpec& spec, uint64_t seed) {
  if (spec.kind == DerivKind::ADDeepSet) return build(spec.base, seed);
  if (spec.kind == DerivKind::DeepDerSet) {
    NetParams p;
    p.flat = Vec::Zero(param_count(spec));
    int ofs = append_layers(spec.derset_phi(), p, 0);
    append_layers(spec.derset_psi(), p, ofs);
    std::mt19937_64 rng(seed);
    init_layers(p, 0, rng);
    return p;
  }
  throw ConfigError("build: unsupported derivative net kind");
}

// ---------------------------------------------------------------------------
// graph builders

ad::Var feedforward_graph(ad::Graph& g, const FeedforwardSpec& spec, ad::Var theta,
                          int theta_offset, ad::Var X) {
  validate(spec);
  const auto dims = layer_dims(spec);
  ad::Var h = X;
  int ofs = theta_offset;
  for (size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    ad::Var W = g.reshape_slice(theta, ofs, out, in);
    ad::Var b = g.reshape_slice(theta, ofs + in * out, 1, out);
    ofs += in * out + out;
    h = g.add_bias(g.matmul(h, W, false, true), b);
    if (l + 1 < dims.size() && spec.act != ad::Activation::Identity)
      h = g.activation(h, spec.act);
  }
  return h;
}

static ad::Var pool(ad::Graph& g, ad::Var h, int N, Pooling p) {
  switch (p) {
    case Pooling::Sum: return g.seg_sum(h, N);
    case Pooling::Mean: return g.seg_mean(h, N);
    case Pooling::Max: return g.seg_max(h, N);
  }
  throw ConfigError("pool: bad pooling");
}

ad::Var symmetric_graph(ad::Graph& g, const SymmetricNetSpec& spec, ad::Var theta, ad::Var X,
                        int N, std::optional<ad::Var> time) {
  if (N < 1) throw ConfigError("symmetric_graph: N must be >= 1");
  if (spec.time_augmented != time.has_value())
    throw UsageError("symmetric_graph: time input must match the time_augmented flag");
  ad::Var h = feedforward_graph(g, spec.phi(), theta, 0, X);
  ad::Var p = pool(g, h, N, spec.pooling);
  if (time) p = g.concat_cols(*time, p);
  return feedforward_graph(g, spec.psi(), theta, param_count(spec.phi()), p);
}

ad::Var deepderset_graph(ad::Graph& g, const DerivativeNetSpec& spec, ad::Var theta, ad::Var X,
                         int N) {
  if (spec.kind != DerivKind::DeepDerSet)
    throw UsageError("deepderset_graph: spec is not a DeepDerSet");
  ad::Var h = feedforward_graph(g, spec.derset_phi(), theta, 0, X);
  ad::Var p = pool(g, h, N, spec.base.pooling);
  ad::Var pb = g.seg_broadcast(p, N);
  ad::Var z = feedforward_graph(g, spec.derset_psi(), theta,
                                param_count(spec.derset_phi()), g.concat_cols(pb, X));
  return spec.output_scale == 1.0 ? z : g.scale(z, spec.output_scale);
}

ad::Var ad_gradient_graph(ad::Graph& g, const SymmetricNetSpec& spec, ad::Var theta, ad::Var X,
                          int N) {
  if (spec.out != 1)
    throw UsageError("ad_gradient_graph: the differentiated net must be scalar-valued");
  ad::Var y = symmetric_graph(g, spec, theta, X, N);
  ad::Var s = g.sum_all(y);  // samples are independent, so the sum's gradient stacks them
  ad::Var wrt[] = {X};
  return g.record_gradients(s, wrt)[0];
}

// ---------------------------------------------------------------------------
// plain evaluation

Vec deepset_forward(const SymmetricNetSpec& spec, const NetParams& params, const Mat& X) {
  const int N = int(X.rows());
  if (N < 1) throw ConfigError("deepset_forward: N must be >= 1");
  ad::Graph g;
  ad::Var theta = g.constant(params.flat, "theta");
  ad::Var Xv = g.constant(X, "X");
  ad::Var y = symmetric_graph(g, spec, theta, Xv, N);
  return g.eval(y).row(0).transpose();
}

Vec pointnet_forward(const SymmetricNetSpec& spec, const NetParams& params, const Mat& X) {
  SymmetricNetSpec s = spec;
  s.pooling = Pooling::Max;
  return deepset_forward(s, params, X);
}

Vec time_deepset_forward(const SymmetricNetSpec& spec, const NetParams& params, double t,
                         const Mat& X) {
  const int N = int(X.rows());
  ad::Graph g;
  ad::Var theta = g.constant(params.flat, "theta");
  ad::Var Xv = g.constant(X, "X");
  ad::Var tv = g.constant(Mat::Constant(1, 1, t), "t");
  ad::Var y = symmetric_graph(g, spec, theta, Xv, N, tv);
  return g.eval(y).row(0).transpose();
}

Vec deepderset_forward(const DerivativeNetSpec& spec, const NetParams& params, const Mat& X,
                       const Vec& x) {
  // evaluate Z(X, x) for an arbitrary query point: pool over X, then psi(pool, x)
  const int N = int(X.rows());
  ad::Graph g;
  ad::Var theta = g.constant(params.flat, "theta");
  ad::Var Xv = g.constant(X, "X");
  ad::Var h = feedforward_graph(g, spec.derset_phi(), theta, 0, Xv);
  ad::Var p = pool(g, h, N, spec.base.pooling);
  ad::Var xv = g.constant(x.transpose(), "x");
  ad::Var z = feedforward_graph(g, spec.derset_psi(), theta, param_count(spec.derset_phi()),
                                g.concat_cols(p, xv));
  if (spec.output_scale != 1.0) z = g.scale(z, spec.output_scale);
  return g.eval(z).row(0).transpose();
}

Mat ad_deepset_gradient(const SymmetricNetSpec& spec, const NetParams& params, const Mat& X) {
  const int N = int(X.rows());
  ad::Graph g;
  ad::Var theta = g.constant(params.flat, "theta");
  ad::Var Xv = g.input(N, spec.d, "X");
  g.bind(Xv, X);
  ad::Var z = ad_gradient_graph(g, spec, theta, Xv, N);
  return g.eval(z);
}

Vec feedforward_forward(const FeedforwardSpec& spec, const NetParams& params, const Vec& x) {
  ad::Graph g;
  ad::Var theta = g.constant(params.flat, "theta");
  ad::Var xv = g.constant(x.transpose(), "x");
  ad::Var y = feedforward_graph(g, spec, theta, 0, xv);
  return g.eval(y).row(0).transpose();
}

Mat derivative_rows(const DerivativeNetSpec& spec, const NetParams& params, const Mat& X, int N) {
  if (X.rows() % N != 0) throw ShapeError("derivative_rows: rows not a multiple of N");
  ad::Graph g;
  ad::Var theta = g.constant(params.flat, "theta");
  ad::Var Xv = g.input(int(X.rows()), int(X.cols()), "X");
  g.bind(Xv, X);
  ad::Var z;
  switch (spec.kind) {
    case DerivKind::DeepDerSet:
      z = deepderset_graph(g, spec, theta, Xv, N);
      break;
    case DerivKind::ADDeepSet: {
      z = ad_gradient_graph(g, spec.base, theta, Xv, N);
      if (spec.output_scale != 1.0) z = g.scale(z, spec.output_scale);
      break;
    }
    case DerivKind::Feedforward:
      throw ConfigError("derivative_rows: feedforward derivative nets use their own layout");
  }
  return g.eval(z);
}

Mat z_diag_derivative(const DerivativeNetSpec& spec, const NetParams& params, const Mat& X,
                      int N) {
  if (spec.base.act == ad::Activation::ReLU)
    throw ConfigError(
        "z_diag_derivative: ReLU on the differentiated path (second derivative vanishes almost "
        "everywhere); use a smooth activation");
  if (X.rows() % N != 0) throw ShapeError("z_diag_derivative: rows not a multiple of N");
  const int d = int(X.cols());
  const int B = int(X.rows()) / N;

  ad::Graph g;
  ad::Var theta = g.constant(params.flat, "theta");
  ad::Var Xv = g.input(int(X.rows()), d, "X");
  g.bind(Xv, X);
  ad::Var z = spec.kind == DerivKind::DeepDerSet
                  ? deepderset_graph(g, spec, theta, Xv, N)
                  : [&] {
                      ad::Var zz = ad_gradient_graph(g, spec.base, theta, Xv, N);
                      return spec.output_scale != 1.0 ? g.scale(zz, spec.output_scale) : zz;
                    }();
  g.eval(z);

  Mat out(X.rows(), d * d);
  for (int r = 0; r < N; ++r) {
    for (int j = 0; j < d; ++j) {
      Mat seed = Mat::Zero(X.rows(), d);
      for (int b = 0; b < B; ++b) seed(b * N + r, j) = 1.0;
      const Mat dz = g.tangent(z, {{Xv, seed}});
      for (int b = 0; b < B; ++b)
        for (int i = 0; i < d; ++i) out(b * N + r, i * d + j) = dz(b * N + r, i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoints

static constexpr char kMagic[] = "SYMPDE-NET-1";

void save_net(const std::string& path, const std::string& kind_header, const Vec& flat) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("save_net: cannot open '" + path + "'");
  f.write(kMagic, sizeof(kMagic) - 1);
  const uint32_t hlen = uint32_t(kind_header.size());
  const uint64_t n = uint64_t(flat.size());
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(kind_header.data(), hlen);
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(flat.data()), std::streamsize(n * 8));
  if (!f) throw ConfigError("save_net: write failed for '" + path + "'");
}

Vec load_net(const std::string& path, std::string* kind_header) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("load_net: cannot open '" + path + "'");
  char magic[sizeof(kMagic) - 1];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw ConfigError("load_net: '" + path + "' is not a network checkpoint");
  uint32_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 4);
  std::string header(hlen, '\0');
  f.read(header.data(), hlen);
  uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  Vec flat{Eigen::Index(n)};
  f.read(reinterpret_cast<char*>(flat.data()), std::streamsize(n * 8));
  if (!f) throw ConfigError("load_net: truncated checkpoint '" + path + "'");
  if (kind_header) *kind_header = header;
  return flat;
}

}  // namespace sympde
