#include "sympde/graph.hpp"

#include <algorithm>
#include <cmath>

namespace sympde::ad {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::ELU: return "elu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "elu") return Activation::ELU;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

bool is_smooth(Activation a) { return a != Activation::ReLU; }

double act_value(Activation a, double x, int order) {
  switch (a) {
    case Activation::Identity:
      return order == 0 ? x : (order == 1 ? 1.0 : 0.0);
    case Activation::ReLU:
      if (order == 0) return x > 0 ? x : 0.0;
      if (order == 1) return x > 0 ? 1.0 : 0.0;
      return 0.0;  // a.e.; the solver refuses ReLU where curvature matters
    case Activation::Tanh: {
      const double t = std::tanh(x);
      if (order == 0) return t;
      if (order == 1) return 1.0 - t * t;
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::ELU: {
      // alpha = 1
      if (order == 0) return x > 0 ? x : std::expm1(x);
      if (order == 1) return x > 0 ? 1.0 : std::exp(x);
      return x > 0 ? 0.0 : std::exp(x);
    }
    case Activation::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      if (order == 0) return s;
      if (order == 1) return s * (1.0 - s);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
  }
  return 0.0;
}

Mat act_apply(Activation a, const Mat& x, int order) {
  return x.unaryExpr([a, order](double v) { return act_value(a, v, order); });
}

// ---------------------------------------------------------------------------
// construction

namespace {
const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::ReshapeSlice: return "reshape_slice";
    case Op::FlattenPad: return "flatten_pad";
    case Op::MatMul: return "matmul";
    case Op::AddBias: return "add_bias";
    case Op::Act: return "act";
    case Op::ActPrime: return "act_prime";
    case Op::ActSecond: return "act_second";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::SegSum: return "seg_sum";
    case Op::SegMean: return "seg_mean";
    case Op::SegMax: return "seg_max";
    case Op::SegGather: return "seg_gather";
    case Op::SegScatter: return "seg_scatter";
    case Op::SegBroadcast: return "seg_broadcast";
    case Op::RowSum: return "row_sum";
    case Op::ColSum: return "col_sum";
    case Op::SumAll: return "sum_all";
    case Op::MeanAll: return "mean_all";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::PadCols: return "pad_cols";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::FillLike: return "fill_like";
  }
  return "?";
}

std::string op_label(const Graph::Node& n) {
  std::string s = op_name(n.op);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s;
}
}  // namespace

const Graph::Node& Graph::node(int id) const {
  if (id < 0 || id >= int(nodes_.size())) throw UsageError("node id out of range");
  return nodes_[id];
}

Graph::Node& Graph::mut(int id) { return nodes_[id]; }

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

void Graph::check_shape(bool ok, const std::string& what) const {
  if (!ok) throw ShapeError(what);
}

Var Graph::constant(Mat value, std::string name) {
  Node n;
  n.op = Op::Constant;
  n.rows = int(value.rows());
  n.cols = int(value.cols());
  n.value = std::move(value);
  n.name = std::move(name);
  n.evaluated = true;
  return push(std::move(n));
}

Var Graph::scalar(double value) { return constant(Mat::Constant(1, 1, value)); }

Var Graph::input(int rows, int cols, std::string name) {
  Node n;
  n.op = Op::Input;
  n.rows = rows;
  n.cols = cols;
  n.name = std::move(name);
  return push(std::move(n));
}

Var Graph::param(int length, std::string name) {
  Node n;
  n.op = Op::Param;
  n.rows = length;
  n.cols = 1;
  n.name = std::move(name);
  return push(std::move(n));
}

void Graph::bind(Var leaf, Mat value) {
  Node& n = mut(leaf.id);
  if (n.op != Op::Input && n.op != Op::Param)
    throw UsageError("bind: node '" + n.name + "' is not an input or parameter leaf");
  check_shape(value.rows() == n.rows && value.cols() == n.cols,
              "bind: shape mismatch for '" + n.name + "'");
  n.value = std::move(value);
  n.evaluated = true;
}

Var Graph::reshape_slice(Var flat, int offset, int rows, int cols) {
  const Node& a = node(flat.id);
  check_shape(a.cols == 1, "reshape_slice: source must be a column vector");
  check_shape(offset >= 0 && offset + rows * cols <= a.rows,
              "reshape_slice: slice out of range");
  Node n;
  n.op = Op::ReshapeSlice;
  n.a = flat.id;
  n.ofs = offset;
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

Var Graph::matmul(Var av, Var bv, bool ta, bool tb) {
  const Node& a = node(av.id);
  const Node& b = node(bv.id);
  const int ar = ta ? a.cols : a.rows, ac = ta ? a.rows : a.cols;
  const int br = tb ? b.cols : b.rows, bc = tb ? b.rows : b.cols;
  check_shape(ac == br, "matmul: inner dimensions differ");
  Node n;
  n.op = Op::MatMul;
  n.a = av.id;
  n.b = bv.id;
  n.ta = ta;
  n.tb = tb;
  n.rows = ar;
  n.cols = bc;
  return push(std::move(n));
}

Var Graph::add_bias(Var av, Var biasv) {
  const Node& a = node(av.id);
  const Node& b = node(biasv.id);
  check_shape(b.rows == 1 && b.cols == a.cols, "add_bias: bias must be 1 x cols");
  Node n;
  n.op = Op::AddBias;
  n.a = av.id;
  n.b = biasv.id;
  n.rows = a.rows;
  n.cols = a.cols;
  return push(std::move(n));
}

Var Graph::activation(Var a, Activation act) {
  Node n;
  n.op = Op::Act;
  n.a = a.id;
  n.act = act;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::act_prime(Var a, Activation act) {
  Node n;
  n.op = Op::ActPrime;
  n.a = a.id;
  n.act = act;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::act_second(Var a, Activation act) {
  Node n;
  n.op = Op::ActSecond;
  n.a = a.id;
  n.act = act;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

static void same_shape(const Graph& g, Var a, Var b, const char* what) {
  if (g.node(a.id).rows != g.node(b.id).rows || g.node(a.id).cols != g.node(b.id).cols)
    throw ShapeError(std::string(what) + ": operand shapes differ");
}

Var Graph::add(Var a, Var b) {
  same_shape(*this, a, b, "add");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  same_shape(*this, a, b, "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  same_shape(*this, a, b, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::div(Var a, Var b) {
  same_shape(*this, a, b, "div");
  Node n;
  n.op = Op::Div;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::scale(Var a, double s) {
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.scale = s;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

static void check_group(const Graph& g, Var a, int group, const char* what) {
  if (group < 1 || g.node(a.id).rows % group != 0)
    throw ShapeError(std::string(what) + ": rows not divisible by group size");
}

Var Graph::seg_sum(Var a, int group) {
  check_group(*this, a, group, "seg_sum");
  Node n;
  n.op = Op::SegSum;
  n.a = a.id;
  n.seg = group;
  n.rows = node(a.id).rows / group;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::seg_mean(Var a, int group) {
  check_group(*this, a, group, "seg_mean");
  Node n;
  n.op = Op::SegMean;
  n.a = a.id;
  n.seg = group;
  n.rows = node(a.id).rows / group;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::seg_max(Var a, int group) {
  check_group(*this, a, group, "seg_max");
  Node n;
  n.op = Op::SegMax;
  n.a = a.id;
  n.seg = group;
  n.rows = node(a.id).rows / group;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::seg_broadcast(Var a, int group) {
  Node n;
  n.op = Op::SegBroadcast;
  n.a = a.id;
  n.seg = group;
  n.rows = node(a.id).rows * group;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::row_sum(Var a) {
  Node n;
  n.op = Op::RowSum;
  n.a = a.id;
  n.rows = node(a.id).rows;
  n.cols = 1;
  return push(std::move(n));
}

Var Graph::col_sum(Var a) {
  Node n;
  n.op = Op::ColSum;
  n.a = a.id;
  n.rows = 1;
  n.cols = node(a.id).cols;
  return push(std::move(n));
}

Var Graph::sum_all(Var a) {
  Node n;
  n.op = Op::SumAll;
  n.a = a.id;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

Var Graph::mean_all(Var a) {
  Node n;
  n.op = Op::MeanAll;
  n.a = a.id;
  n.rows = 1;
  n.cols = 1;
  return push(std::move(n));
}

Var Graph::concat_cols(Var a, Var b) {
  check_shape(node(a.id).rows == node(b.id).rows, "concat_cols: row counts differ");
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a.id).rows;
  n.cols = node(a.id).cols + node(b.id).cols;
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, int offset, int count) {
  check_shape(offset >= 0 && offset + count <= node(a.id).cols, "slice_cols: out of range");
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.ofs = offset;
  n.rows = node(a.id).rows;
  n.cols = count;
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// forward evaluation

void Graph::eval_node(int id) {
  Node& n = nodes_[id];
  const auto A = [&]() -> const Mat& { return nodes_[n.a].value; };
  const auto B = [&]() -> const Mat& { return nodes_[n.b].value; };
  switch (n.op) {
    case Op::Constant:
      return;  // already set
    case Op::Input:
    case Op::Param:
      if (!n.evaluated)
        throw UsageError("eval: leaf '" + n.name + "' has no bound value");
      return;
    case Op::ReshapeSlice:
      n.value = Eigen::Map<const Mat>(A().data() + n.ofs, n.rows, n.cols);
      break;
    case Op::FlattenPad: {
      n.value = Mat::Zero(n.rows, 1);
      const Mat& src = A();
      Eigen::Map<Mat>(n.value.data() + n.ofs, src.rows(), src.cols()) = src;
      break;
    }
    case Op::MatMul: {
      if (!n.ta && !n.tb) n.value.noalias() = A() * B();
      else if (n.ta && !n.tb) n.value.noalias() = A().transpose() * B();
      else if (!n.ta && n.tb) n.value.noalias() = A() * B().transpose();
      else n.value.noalias() = A().transpose() * B().transpose();
      break;
    }
    case Op::AddBias:
      n.value = A().rowwise() + B().row(0);
      break;
    case Op::Act:
      n.value = act_apply(n.act, A(), 0);
      break;
    case Op::ActPrime:
      n.value = act_apply(n.act, A(), 1);
      break;
    case Op::ActSecond:
      n.value = act_apply(n.act, A(), 2);
      break;
    case Op::Add:
      n.value = A() + B();
      break;
    case Op::Sub:
      n.value = A() - B();
      break;
    case Op::Mul:
      n.value = A().cwiseProduct(B());
      break;
    case Op::Div:
      n.value = A().cwiseQuotient(B());
      break;
    case Op::Scale:
      n.value = A() * n.scale;
      break;
    case Op::SegSum: {
      n.value.resize(n.rows, n.cols);
      for (int gI = 0; gI < n.rows; ++gI)
        n.value.row(gI) = A().middleRows(gI * n.seg, n.seg).colwise().sum();
      break;
    }
    case Op::SegMean: {
      n.value.resize(n.rows, n.cols);
      for (int gI = 0; gI < n.rows; ++gI)
        n.value.row(gI) = A().middleRows(gI * n.seg, n.seg).colwise().mean();
      break;
    }
    case Op::SegMax: {
      n.value.resize(n.rows, n.cols);
      n.argmax.assign(size_t(n.rows) * n.cols, 0);
      for (int gI = 0; gI < n.rows; ++gI) {
        for (int c = 0; c < n.cols; ++c) {
          int best = 0;
          double bv = A()(gI * n.seg, c);
          for (int r = 1; r < n.seg; ++r) {
            const double v = A()(gI * n.seg + r, c);
            if (v > bv) {  // strict: first index wins ties
              bv = v;
              best = r;
            }
          }
          n.value(gI, c) = bv;
          n.argmax[size_t(gI) * n.cols + c] = best;
        }
      }
      break;
    }
    case Op::SegGather: {
      const Node& ref = nodes_[n.ref];
      n.value.resize(n.rows, n.cols);
      for (int gI = 0; gI < n.rows; ++gI)
        for (int c = 0; c < n.cols; ++c)
          n.value(gI, c) = A()(gI * ref.seg + ref.argmax[size_t(gI) * n.cols + c], c);
      break;
    }
    case Op::SegScatter: {
      const Node& ref = nodes_[n.ref];
      n.value = Mat::Zero(n.rows, n.cols);
      const int groups = n.rows / ref.seg;
      for (int gI = 0; gI < groups; ++gI)
        for (int c = 0; c < n.cols; ++c)
          n.value(gI * ref.seg + ref.argmax[size_t(gI) * n.cols + c], c) = A()(gI, c);
      break;
    }
    case Op::SegBroadcast: {
      n.value.resize(n.rows, n.cols);
      const int groups = n.rows / n.seg;
      for (int gI = 0; gI < groups; ++gI)
        n.value.middleRows(gI * n.seg, n.seg) = A().row(gI).replicate(n.seg, 1);
      break;
    }
    case Op::RowSum:
      n.value = A().rowwise().sum();
      break;
    case Op::ColSum:
      n.value = A().colwise().sum();
      break;
    case Op::SumAll:
      n.value = Mat::Constant(1, 1, A().sum());
      break;
    case Op::MeanAll:
      n.value = Mat::Constant(1, 1, A().mean());
      break;
    case Op::ConcatCols:
      n.value.resize(n.rows, n.cols);
      n.value.leftCols(nodes_[n.a].cols) = A();
      n.value.rightCols(nodes_[n.b].cols) = B();
      break;
    case Op::SliceCols:
      n.value = A().middleCols(n.ofs, n.cols);
      break;
    case Op::PadCols:
      n.value = Mat::Zero(n.rows, n.cols);
      n.value.middleCols(n.ofs, nodes_[n.a].cols) = A();
      break;
    case Op::BroadcastCols:
      n.value = A().replicate(1, n.cols);
      break;
    case Op::BroadcastRows:
      n.value = A().replicate(n.rows, 1);
      break;
    case Op::FillLike:
      n.value = Mat::Constant(n.rows, n.cols, A()(0, 0));
      break;
  }
  n.evaluated = true;
  if (finite_checks_ && !n.value.allFinite())
    throw NumericError("non-finite value at node #" + std::to_string(id) + " (" +
                       op_label(n) + ")");
}

const Mat& Graph::eval(Var root) {
  if (!root.valid() || root.id >= size()) throw UsageError("eval: invalid root");
  for (int i = 0; i <= root.id; ++i) eval_node(i);
  return nodes_[root.id].value;
}

const Mat& Graph::value(Var v) const {
  const Node& n = node(v.id);
  if (!n.evaluated) throw UsageError("value: node not evaluated");
  return n.value;
}

void Graph::truncate(int n) {
  if (n < 0 || n > size()) throw UsageError("truncate: bad size");
  nodes_.resize(n);
}

// ---------------------------------------------------------------------------
// recorded reverse mode

std::vector<Var> Graph::record_gradients(Var root, std::span<const Var> wrt,
                                         std::optional<Var> seed) {
  const int nfwd = root.id + 1;
  if (!root.valid() || root.id >= size()) throw UsageError("record_gradients: invalid root");

  // restrict to nodes that sit between a requested leaf and the root
  std::vector<char> reaches_root(nfwd, 0), from_wrt(nfwd, 0);
  reaches_root[root.id] = 1;
  for (int i = root.id; i >= 0; --i) {
    if (!reaches_root[i]) continue;
    const Node& n = nodes_[i];
    if (n.a >= 0) reaches_root[n.a] = 1;
    if (n.b >= 0) reaches_root[n.b] = 1;
  }
  for (Var w : wrt)
    if (w.id < nfwd) from_wrt[w.id] = 1;
  for (int i = 0; i < nfwd; ++i) {
    const Node& n = nodes_[i];
    if ((n.a >= 0 && n.a < nfwd && from_wrt[n.a]) || (n.b >= 0 && n.b < nfwd && from_wrt[n.b]))
      from_wrt[i] = 1;
  }

  std::vector<Var> adj(nfwd, Var{-1});
  auto accumulate = [&](int id, Var g) {
    if (id < 0 || id >= nfwd || !reaches_root[id] || !from_wrt[id]) return;
    adj[id] = adj[id].valid() ? add(adj[id], g) : g;
  };

  Var seed_node = seed.value_or(Var{-1});
  if (!seed_node.valid())
    seed_node = constant(Mat::Ones(nodes_[root.id].rows, nodes_[root.id].cols), "seed");
  else
    check_shape(node(seed_node.id).rows == nodes_[root.id].rows &&
                    node(seed_node.id).cols == nodes_[root.id].cols,
                "record_gradients: seed shape differs from root");
  adj[root.id] = seed_node;

  for (int i = root.id; i >= 0; --i) {
    if (!adj[i].valid()) continue;
    const Node n = nodes_[i];  // copy: pushes may reallocate
    const Var g = adj[i];
    const Var av{n.a}, bv{n.b};
    switch (n.op) {
      case Op::Constant:
      case Op::Input:
      case Op::Param:
        break;
      case Op::ReshapeSlice: {
        Node fp;
        fp.op = Op::FlattenPad;
        fp.a = g.id;
        fp.ofs = n.ofs;
        fp.rows = nodes_[n.a].rows;
        fp.cols = 1;
        accumulate(n.a, push(std::move(fp)));
        break;
      }
      case Op::FlattenPad:
        accumulate(n.a, reshape_slice(g, n.ofs, nodes_[n.a].rows, nodes_[n.a].cols));
        break;
      case Op::MatMul: {
        // dA and dB for the four transpose-flag combinations
        if (!n.ta) accumulate(n.a, n.tb ? matmul(g, bv, false, false) : matmul(g, bv, false, true));
        else accumulate(n.a, n.tb ? matmul(bv, g, true, true) : matmul(bv, g, false, true));
        if (!n.tb) accumulate(n.b, n.ta ? matmul(av, g, false, false) : matmul(av, g, true, false));
        else accumulate(n.b, n.ta ? matmul(g, av, true, true) : matmul(g, av, true, false));
        break;
      }
      case Op::AddBias:
        accumulate(n.a, g);
        accumulate(n.b, col_sum(g));
        break;
      case Op::Act:
        accumulate(n.a, mul(g, act_prime(av, n.act)));
        break;
      case Op::ActPrime:
        accumulate(n.a, mul(g, act_second(av, n.act)));
        break;
      case Op::ActSecond:
        throw UsageError("third-order activation derivatives are not supported");
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Sub:
        accumulate(n.a, g);
        accumulate(n.b, scale(g, -1.0));
        break;
      case Op::Mul:
        accumulate(n.a, mul(g, bv));
        accumulate(n.b, mul(g, av));
        break;
      case Op::Div:
        accumulate(n.a, div(g, bv));
        accumulate(n.b, scale(mul(g, div(Var{i}, bv)), -1.0));
        break;
      case Op::Scale:
        accumulate(n.a, scale(g, n.scale));
        break;
      case Op::SegSum:
        accumulate(n.a, seg_broadcast(g, n.seg));
        break;
      case Op::SegMean:
        accumulate(n.a, scale(seg_broadcast(g, n.seg), 1.0 / n.seg));
        break;
      case Op::SegMax: {
        Node sc;
        sc.op = Op::SegScatter;
        sc.a = g.id;
        sc.ref = i;
        sc.rows = nodes_[n.a].rows;
        sc.cols = n.cols;
        accumulate(n.a, push(std::move(sc)));
        break;
      }
      case Op::SegGather: {
        Node sc;
        sc.op = Op::SegScatter;
        sc.a = g.id;
        sc.ref = n.ref;
        sc.rows = nodes_[n.a].rows;
        sc.cols = n.cols;
        accumulate(n.a, push(std::move(sc)));
        break;
      }
      case Op::SegScatter: {
        Node ga;
        ga.op = Op::SegGather;
        ga.a = g.id;
        ga.ref = n.ref;
        ga.rows = nodes_[n.a].rows;
        ga.cols = n.cols;
        accumulate(n.a, push(std::move(ga)));
        break;
      }
      case Op::SegBroadcast:
        accumulate(n.a, seg_sum(g, n.seg));
        break;
      case Op::RowSum: {
        Node bc;
        bc.op = Op::BroadcastCols;
        bc.a = g.id;
        bc.rows = nodes_[n.a].rows;
        bc.cols = nodes_[n.a].cols;
        accumulate(n.a, push(std::move(bc)));
        break;
      }
      case Op::ColSum: {
        Node bc;
        bc.op = Op::BroadcastRows;
        bc.a = g.id;
        bc.rows = nodes_[n.a].rows;
        bc.cols = nodes_[n.a].cols;
        accumulate(n.a, push(std::move(bc)));
        break;
      }
      case Op::SumAll:
      case Op::MeanAll: {
        Node fl;
        fl.op = Op::FillLike;
        fl.a = g.id;
        fl.rows = nodes_[n.a].rows;
        fl.cols = nodes_[n.a].cols;
        Var gv = push(std::move(fl));
        if (n.op == Op::MeanAll)
          gv = scale(gv, 1.0 / (double(nodes_[n.a].rows) * nodes_[n.a].cols));
        accumulate(n.a, gv);
        break;
      }
      case Op::ConcatCols:
        accumulate(n.a, slice_cols(g, 0, nodes_[n.a].cols));
        accumulate(n.b, slice_cols(g, nodes_[n.a].cols, nodes_[n.b].cols));
        break;
      case Op::SliceCols: {
        Node pc;
        pc.op = Op::PadCols;
        pc.a = g.id;
        pc.ofs = n.ofs;
        pc.rows = nodes_[n.a].rows;
        pc.cols = nodes_[n.a].cols;
        accumulate(n.a, push(std::move(pc)));
        break;
      }
      case Op::PadCols:
        accumulate(n.a, slice_cols(g, n.ofs, n.cols));
        break;
      case Op::BroadcastCols:
        accumulate(n.a, row_sum(g));
        break;
      case Op::BroadcastRows:
        accumulate(n.a, col_sum(g));
        break;
      case Op::FillLike:
        accumulate(n.a, sum_all(g));
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id < nfwd && adj[w.id].valid()) {
      out.push_back(adj[w.id]);
    } else {
      const Node& wn = node(w.id);
      out.push_back(constant(Mat::Zero(wn.rows, wn.cols), "zero-grad"));
    }
  }
  return out;
}

std::map<std::string, Mat> Graph::backward(Var root, std::optional<Mat> seed) {
  if (!node(root.id).evaluated)
    throw UsageError("backward: root has not been evaluated (run forward first)");
  std::vector<Var> leaves;
  for (int i = 0; i < size(); ++i)
    if (nodes_[i].op == Op::Input || nodes_[i].op == Op::Param) leaves.push_back(Var{i});

  const int mark = size();
  std::optional<Var> seed_node;
  if (seed) seed_node = constant(std::move(*seed), "seed");
  auto grads = record_gradients(root, leaves, seed_node);
  std::map<std::string, Mat> out;
  if (!grads.empty()) {
    int last = 0;
    for (Var gv : grads) last = std::max(last, gv.id);
    eval(Var{last});
    for (size_t i = 0; i < leaves.size(); ++i)
      out[nodes_[leaves[i].id].name] = nodes_[grads[i].id].value;
  }
  truncate(mark);
  return out;
}

// ---------------------------------------------------------------------------
// forward-mode tangents

Mat Graph::tangent(Var root, const std::vector<std::pair<Var, Mat>>& seeds) {
  if (!node(root.id).evaluated)
    throw UsageError("tangent: evaluate the graph before requesting tangents");
  std::vector<Mat> dot(root.id + 1);
  std::vector<char> has(root.id + 1, 0);
  for (const auto& [v, m] : seeds) {
    if (v.id > root.id) continue;
    const Node& n = node(v.id);
    if (m.rows() != n.rows || m.cols() != n.cols)
      throw ShapeError("tangent: seed shape mismatch");
    dot[v.id] = m;
    has[v.id] = 1;
  }
  auto dota = [&](const Node& n) -> const Mat& { return dot[n.a]; };
  auto dotb = [&](const Node& n) -> const Mat& { return dot[n.b]; };
  auto hasa = [&](const Node& n) { return n.a >= 0 && has[n.a]; };
  auto hasb = [&](const Node& n) { return n.b >= 0 && has[n.b]; };

  for (int i = 0; i <= root.id; ++i) {
    const Node& n = nodes_[i];
    if (has[i]) continue;  // seeded leaf
    if (!hasa(n) && !hasb(n)) continue;
    Mat d;
    switch (n.op) {
      case Op::Constant:
      case Op::Input:
      case Op::Param:
        continue;
      case Op::ReshapeSlice:
        d = Eigen::Map<const Mat>(dota(n).data() + n.ofs, n.rows, n.cols);
        break;
      case Op::FlattenPad: {
        d = Mat::Zero(n.rows, 1);
        Eigen::Map<Mat>(d.data() + n.ofs, dota(n).rows(), dota(n).cols()) = dota(n);
        break;
      }
      case Op::MatMul: {
        const Mat& A = nodes_[n.a].value;
        const Mat& B = nodes_[n.b].value;
        d = Mat::Zero(n.rows, n.cols);
        auto opm = [](const Mat& m, bool t) { return t ? Mat(m.transpose()) : m; };
        if (hasa(n)) d += opm(dota(n), n.ta) * opm(B, n.tb);
        if (hasb(n)) d += opm(A, n.ta) * opm(dotb(n), n.tb);
        break;
      }
      case Op::AddBias:
        d = hasa(n) ? dota(n) : Mat::Zero(n.rows, n.cols);
        if (hasb(n)) d = d.rowwise() + dotb(n).row(0);
        break;
      case Op::Act:
        d = act_apply(n.act, nodes_[n.a].value, 1).cwiseProduct(dota(n));
        break;
      case Op::ActPrime:
        d = act_apply(n.act, nodes_[n.a].value, 2).cwiseProduct(dota(n));
        break;
      case Op::ActSecond:
        throw UsageError("third-order activation derivatives are not supported");
      case Op::Add:
        d = Mat::Zero(n.rows, n.cols);
        if (hasa(n)) d += dota(n);
        if (hasb(n)) d += dotb(n);
        break;
      case Op::Sub:
        d = Mat::Zero(n.rows, n.cols);
        if (hasa(n)) d += dota(n);
        if (hasb(n)) d -= dotb(n);
        break;
      case Op::Mul:
        d = Mat::Zero(n.rows, n.cols);
        if (hasa(n)) d += dota(n).cwiseProduct(nodes_[n.b].value);
        if (hasb(n)) d += dotb(n).cwiseProduct(nodes_[n.a].value);
        break;
      case Op::Div:
        d = Mat::Zero(n.rows, n.cols);
        if (hasa(n)) d += dota(n).cwiseQuotient(nodes_[n.b].value);
        if (hasb(n)) d -= n.value.cwiseProduct(dotb(n)).cwiseQuotient(nodes_[n.b].value);
        break;
      case Op::Scale:
        d = dota(n) * n.scale;
        break;
      case Op::SegSum: {
        d.resize(n.rows, n.cols);
        for (int gI = 0; gI < n.rows; ++gI)
          d.row(gI) = dota(n).middleRows(gI * n.seg, n.seg).colwise().sum();
        break;
      }
      case Op::SegMean: {
        d.resize(n.rows, n.cols);
        for (int gI = 0; gI < n.rows; ++gI)
          d.row(gI) = dota(n).middleRows(gI * n.seg, n.seg).colwise().mean();
        break;
      }
      case Op::SegMax: {
        d.resize(n.rows, n.cols);
        for (int gI = 0; gI < n.rows; ++gI)
          for (int c = 0; c < n.cols; ++c)
            d(gI, c) = dota(n)(gI * n.seg + n.argmax[size_t(gI) * n.cols + c], c);
        break;
      }
      case Op::SegGather: {
        const Node& ref = nodes_[n.ref];
        d.resize(n.rows, n.cols);
        for (int gI = 0; gI < n.rows; ++gI)
          for (int c = 0; c < n.cols; ++c)
            d(gI, c) = dota(n)(gI * ref.seg + ref.argmax[size_t(gI) * n.cols + c], c);
        break;
      }
      case Op::SegScatter: {
        const Node& ref = nodes_[n.ref];
        d = Mat::Zero(n.rows, n.cols);
        const int groups = n.rows / ref.seg;
        for (int gI = 0; gI < groups; ++gI)
          for (int c = 0; c < n.cols; ++c)
            d(gI * ref.seg + ref.argmax[size_t(gI) * n.cols + c], c) = dota(n)(gI, c);
        break;
      }
      case Op::SegBroadcast: {
        d.resize(n.rows, n.cols);
        const int groups = n.rows / n.seg;
        for (int gI = 0; gI < groups; ++gI)
          d.middleRows(gI * n.seg, n.seg) = dota(n).row(gI).replicate(n.seg, 1);
        break;
      }
      case Op::RowSum:
        d = dota(n).rowwise().sum();
        break;
      case Op::ColSum:
        d = dota(n).colwise().sum();
        break;
      case Op::SumAll:
        d = Mat::Constant(1, 1, dota(n).sum());
        break;
      case Op::MeanAll:
        d = Mat::Constant(1, 1, dota(n).mean());
        break;
      case Op::ConcatCols:
        d.resize(n.rows, n.cols);
        d.leftCols(nodes_[n.a].cols) =
            hasa(n) ? dota(n) : Mat::Zero(n.rows, nodes_[n.a].cols);
        d.rightCols(nodes_[n.b].cols) =
            hasb(n) ? dotb(n) : Mat::Zero(n.rows, nodes_[n.b].cols);
        break;
      case Op::SliceCols:
        d = dota(n).middleCols(n.ofs, n.cols);
        break;
      case Op::PadCols:
        d = Mat::Zero(n.rows, n.cols);
        d.middleCols(n.ofs, nodes_[n.a].cols) = dota(n);
        break;
      case Op::BroadcastCols:
        d = dota(n).replicate(1, n.cols);
        break;
      case Op::BroadcastRows:
        d = dota(n).replicate(n.rows, 1);
        break;
      case Op::FillLike:
        d = Mat::Constant(n.rows, n.cols, dota(n)(0, 0));
        break;
    }
    dot[i] = std::move(d);
    has[i] = 1;
  }
  if (!has[root.id]) return Mat::Zero(node(root.id).rows, node(root.id).cols);
  return dot[root.id];
}

}  // namespace sympde::ad
