#pragma once

// Dense 64-bit tensors and a reverse-mode tape.
//
// Every primitive works on rank-2 tensors (a vector is 1 x n, a scalar 1 x 1).
// Ops are recorded on a Tape as they are applied; backward() walks the tape
// in reverse and accumulates adjoints into the parameter leaves.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace snmt {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Rank-2 accessors.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double item() const;

  bool has_same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

enum class OpKind {
  parameter,
  constant,
  matmul,
  add,
  sub,
  mul,
  scale,
  concat,
  slice,
  sigmoid,
  tanh,
  softmax_rows,
  log_softmax_rows,
  embedding_lookup,
  sum,
  pick,
  transpose,
  reshape,
  add_tiled,
  block_weighted_sum,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

struct TapeEntry {
  OpKind kind = OpKind::constant;
  std::vector<std::size_t> inputs;
  Tensor value;
  // Op attributes: axis/begin/end for slice, axis for concat, factor for
  // scale, row extents for reshape, index lists for lookups.
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double factor = 1.0;
  std::vector<long> indices;
  std::string name;
};

using GradientMap = std::unordered_map<std::size_t, Tensor>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var parameter(Tensor value, std::string name = {});
  Var constant(Tensor value);

  const TapeEntry& entry(std::size_t id) const;
  const Tensor& value(std::size_t id) const { return entry(id).value; }
  std::size_t size() const { return entries_.size(); }
  bool is_parameter(std::size_t id) const { return entry(id).kind == OpKind::parameter; }

  /// Recomputes every non-leaf node from its recorded inputs.
  std::vector<Tensor> replay() const;

  Var record(TapeEntry entry);

 private:
  std::vector<TapeEntry> entries_;
};

// Primitives. All inputs must live on the same tape.
Var matmul(Var a, Var b);
/// Elementwise sum; `b` may also be a 1 x n bias row added to every row of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// axis 0 stacks rows, axis 1 joins columns.
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var embedding_lookup(Var table, std::span<const int> ids);
Var sum(Var a);
/// out[i] = a[i, idx[i]], or 0 where idx[i] < 0.
Var pick(Var a, std::span<const int> idx);
Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// x is (k*m) x n, y is m x n; adds y to each of the k row blocks of x.
Var add_tiled(Var x, Var y);
/// weights is m x k, blocks is (k*m) x n; out[b] = sum_t weights[b,t] * blocks[t*m + b].
Var block_weighted_sum(Var weights, Var blocks);

/// Reverse pass from a scalar node. Returns gradients for every parameter leaf.
GradientMap backward(const Tape& tape, Var loss);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t elements_checked = 0;
};

/// Builds the scalar objective on a fresh tape from the given parameter vars.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares analytic gradients with central finite differences over every
/// parameter element. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradientCheckResult check_gradients(const TapeFunction& f, std::span<const Tensor> params,
                                    double h = 1e-5, unsigned threads = 1);

}  // namespace snmt
