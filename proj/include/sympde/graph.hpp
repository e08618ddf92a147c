#pragma once

#include "sympde/common.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sympde::ad {

enum class Activation { Identity, ReLU, Tanh, ELU, Sigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);
bool is_smooth(Activation a);  // twice differentiable (ELU taken with alpha=1, smooth a.e.)

enum class Op : uint8_t {
  Constant,
  Input,
  Param,
  ReshapeSlice,  // flat column vector -> rows x cols block starting at offset
  FlattenPad,    // rows x cols block -> flat column vector of given length at offset
  MatMul,        // op(A) * op(B) with per-side transpose flags
  AddBias,       // rows of A + bias row vector (1 x c)
  Act,           // elementwise activation of the pre-activation parent
  ActPrime,      // first derivative of the activation at the parent value
  ActSecond,     // second derivative of the activation at the parent value
  Add,
  Sub,
  Mul,
  Div,
  Scale,        // A * scalar
  SegSum,       // (G*n) x c -> G x c, sum over n consecutive rows
  SegMean,      // average variant
  SegMax,       // componentwise max, first row wins ties
  SegGather,    // gather rows/entries at a SegMax node's recorded argmax
  SegScatter,   // scatter G x c entries back to (G*n) x c at recorded argmax
  SegBroadcast, // G x c -> (G*n) x c, repeat each row n times
  RowSum,       // r x c -> r x 1
  ColSum,       // r x c -> 1 x c
  SumAll,       // r x c -> 1 x 1
  MeanAll,
  ConcatCols,
  SliceCols,
  PadCols,        // place block into zero matrix with more columns
  BroadcastCols,  // r x 1 -> r x c
  BroadcastRows,  // 1 x c -> r x c
  FillLike,       // 1 x 1 -> r x c
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Dense-matrix computation tape. Nodes are appended in topological order;
/// forward evaluation sweeps node storage in index order and is bit-reproducible.
/// record_gradients() appends the reverse-mode adjoint computation as ordinary
/// nodes, so gradients of gradients (and tangents of gradients) come for free.
class Graph {
 public:
  struct Node {
    Op op;
    int a = -1, b = -1;
    int rows = 0, cols = 0;
    bool ta = false, tb = false;     // MatMul transpose flags
    Activation act = Activation::Identity;
    int seg = 1;                     // segment group size
    int ofs = 0;                     // slice/pad/reshape offset
    int ref = -1;                    // SegGather/SegScatter: id of the SegMax owning argmax
    double scale = 1.0;
    std::string name;
    Mat value;
    std::vector<int> argmax;         // SegMax only: flat (group, col) -> winning local row
    bool evaluated = false;
  };

  // ---- leaves ----
  Var constant(Mat value, std::string name = {});
  Var scalar(double value);                       // 1x1 constant
  Var input(int rows, int cols, std::string name);
  Var param(int length, std::string name);        // flat column vector leaf
  void bind(Var leaf, Mat value);                 // set an Input/Param value

  // ---- ops ----
  Var reshape_slice(Var flat, int offset, int rows, int cols);
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add_bias(Var a, Var bias_row);
  Var activation(Var a, Activation act);
  Var act_prime(Var a, Activation act);
  Var act_second(Var a, Activation act);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double s);
  Var seg_sum(Var a, int group);
  Var seg_mean(Var a, int group);
  Var seg_max(Var a, int group);
  Var seg_broadcast(Var a, int group);
  Var row_sum(Var a);
  Var col_sum(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int offset, int count);

  // ---- execution ----
  /// Forward-evaluate every node with id <= root.id; returns the root value.
  const Mat& eval(Var root);
  const Mat& value(Var v) const;
  int rows(Var v) const { return node(v.id).rows; }
  int cols(Var v) const { return node(v.id).cols; }

  /// Append the adjoint computation of `root` w.r.t. each of `wrt` and return
  /// the adjoint nodes (zero constants for unreachable leaves). `seed` defaults
  /// to ones with the root's shape.
  std::vector<Var> record_gradients(Var root, std::span<const Var> wrt,
                                    std::optional<Var> seed = std::nullopt);

  /// One-shot reverse pass: requires `root` to have been evaluated (usage error
  /// otherwise); returns gradients for every Input/Param leaf, zero if unused.
  /// The tape is left unchanged.
  std::map<std::string, Mat> backward(Var root, std::optional<Mat> seed = std::nullopt);

  /// Forward-mode directional derivative of `root` given tangent seeds on
  /// leaves. Requires a prior eval() covering `root`. Tangents are plain
  /// values; nothing is recorded.
  Mat tangent(Var root, const std::vector<std::pair<Var, Mat>>& seeds);

  int size() const { return int(nodes_.size()); }
  void truncate(int n);  // drop nodes with id >= n
  void set_finite_checks(bool on) { finite_checks_ = on; }

  const Node& node(int id) const;

 private:
  Node& mut(int id);
  Var push(Node n);
  void eval_node(int id);
  void check_shape(bool ok, const std::string& what) const;

  std::vector<Node> nodes_;
  bool finite_checks_ = true;
};

/// Elementwise activation helpers (order 0/1/2 derivatives).
double act_value(Activation a, double x, int order);
Mat act_apply(Activation a, const Mat& x, int order);

}  // namespace sympde::ad
