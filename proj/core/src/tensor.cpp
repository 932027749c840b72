#include "snmt/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace snmt {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_error(OpKind kind, const Tensor& a, const Tensor& b,
                              const std::string& detail = {}) {
  std::ostringstream os;
  os << op_name(kind) << ": incompatible shapes " << a.shape_string() << " and "
     << b.shape_string();
  if (!detail.empty()) os << " (" << detail << ")";
  throw ShapeError(os.str());
}

[[noreturn]] void shape_error(OpKind kind, const Tensor& a, const std::string& detail) {
  std::ostringstream os;
  os << op_name(kind) << ": invalid shape " << a.shape_string() << " (" << detail << ")";
  throw ShapeError(os.str());
}

void require_rank2(OpKind kind, const Tensor& t) {
  if (t.rank() != 2) shape_error(kind, t, "expected rank 2");
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Shape validation happens here as well, so record() and replay() share it.
Tensor compute(const TapeEntry& e, const std::vector<const Tensor*>& in) {
  switch (e.kind) {
    case OpKind::parameter:
    case OpKind::constant:
      return e.value;

    case OpKind::matmul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      require_rank2(e.kind, a);
      require_rank2(e.kind, b);
      if (a.cols() != b.rows()) shape_error(e.kind, a, b);
      Tensor out = Tensor::matrix(a.rows(), b.cols());
      as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
      return out;
    }

    case OpKind::add: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      Tensor out = a;
      auto o = out.values();
      auto bv = b.values();
      if (a.has_same_shape(b)) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
      } else if (a.rank() == 2 && b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols()) {
        const std::size_t n = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < n; ++c) o[r * n + c] += bv[c];
      } else {
        shape_error(e.kind, a, b, "expected equal shapes or a bias row");
      }
      return out;
    }

    case OpKind::sub:
    case OpKind::mul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (!a.has_same_shape(b)) shape_error(e.kind, a, b);
      Tensor out = a;
      auto o = out.values();
      auto bv = b.values();
      if (e.kind == OpKind::sub) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
      } else {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
      }
      return out;
    }

    case OpKind::scale: {
      Tensor out = *in[0];
      for (double& v : out.values()) v *= e.factor;
      return out;
    }

    case OpKind::concat: {
      if (in.empty()) throw ShapeError("concat: no inputs");
      const Tensor& first = *in[0];
      require_rank2(e.kind, first);
      if (e.axis == 0) {
        std::size_t rows = 0;
        for (const Tensor* t : in) {
          require_rank2(e.kind, *t);
          if (t->cols() != first.cols()) shape_error(e.kind, first, *t, "column count");
          rows += t->rows();
        }
        std::vector<double> values;
        values.reserve(rows * first.cols());
        for (const Tensor* t : in) values.insert(values.end(), t->values().begin(), t->values().end());
        return Tensor({rows, first.cols()}, std::move(values));
      }
      std::size_t cols = 0;
      for (const Tensor* t : in) {
        require_rank2(e.kind, *t);
        if (t->rows() != first.rows()) shape_error(e.kind, first, *t, "row count");
        cols += t->cols();
      }
      Tensor out = Tensor::matrix(first.rows(), cols);
      std::size_t offset = 0;
      for (const Tensor* t : in) {
        for (std::size_t r = 0; r < t->rows(); ++r)
          for (std::size_t c = 0; c < t->cols(); ++c) out(r, offset + c) = (*t)(r, c);
        offset += t->cols();
      }
      return out;
    }

    case OpKind::slice: {
      const Tensor& a = *in[0];
      require_rank2(e.kind, a);
      const std::size_t extent = e.axis == 0 ? a.rows() : a.cols();
      if (e.begin >= e.end || e.end > extent) {
        shape_error(e.kind, a,
                    "range [" + std::to_string(e.begin) + ", " + std::to_string(e.end) + ")");
      }
      if (e.axis == 0) {
        const std::size_t n = a.cols();
        std::vector<double> values(a.values().begin() + static_cast<long>(e.begin * n),
                                   a.values().begin() + static_cast<long>(e.end * n));
        return Tensor({e.end - e.begin, n}, std::move(values));
      }
      Tensor out = Tensor::matrix(a.rows(), e.end - e.begin);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = e.begin; c < e.end; ++c) out(r, c - e.begin) = a(r, c);
      return out;
    }

    case OpKind::sigmoid: {
      Tensor out = *in[0];
      for (double& v : out.values()) v = sigmoid_scalar(v);
      return out;
    }

    case OpKind::tanh: {
      Tensor out = *in[0];
      for (double& v : out.values()) v = std::tanh(v);
      return out;
    }

    case OpKind::softmax_rows:
    case OpKind::log_softmax_rows: {
      const Tensor& a = *in[0];
      require_rank2(e.kind, a);
      Tensor out = a;
      const std::size_t n = a.cols();
      auto o = out.values();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double* row = o.data() + r * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
        if (e.kind == OpKind::softmax_rows) {
          for (std::size_t c = 0; c < n; ++c) row[c] = std::exp(row[c] - mx) / z;
        } else {
          const double lse = mx + std::log(z);
          for (std::size_t c = 0; c < n; ++c) row[c] -= lse;
        }
      }
      return out;
    }

    case OpKind::embedding_lookup: {
      const Tensor& table = *in[0];
      require_rank2(e.kind, table);
      const std::size_t d = table.cols();
      std::vector<double> values(e.indices.size() * d);
      for (std::size_t r = 0; r < e.indices.size(); ++r) {
        const long id = e.indices[r];
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
          shape_error(e.kind, table, "id " + std::to_string(id) + " out of range");
        std::copy_n(table.values().begin() + static_cast<long>(static_cast<std::size_t>(id) * d), d,
                    values.begin() + static_cast<long>(r * d));
      }
      return Tensor({e.indices.size(), d}, std::move(values));
    }

    case OpKind::sum: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Tensor::scalar(s);
    }

    case OpKind::pick: {
      const Tensor& a = *in[0];
      require_rank2(e.kind, a);
      if (e.indices.size() != a.rows()) shape_error(e.kind, a, "index count differs from rows");
      Tensor out = Tensor::matrix(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const long idx = e.indices[r];
        if (idx < 0) continue;
        if (static_cast<std::size_t>(idx) >= a.cols())
          shape_error(e.kind, a, "index " + std::to_string(idx) + " out of range");
        out(r, 0) = a(r, static_cast<std::size_t>(idx));
      }
      return out;
    }

    case OpKind::transpose: {
      const Tensor& a = *in[0];
      require_rank2(e.kind, a);
      Tensor out = Tensor::matrix(a.cols(), a.rows());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
      return out;
    }

    case OpKind::reshape: {
      const Tensor& a = *in[0];
      if (e.begin * e.end != a.size())
        shape_error(e.kind, a,
                    "cannot view as " + std::to_string(e.begin) + "x" + std::to_string(e.end));
      return Tensor({e.begin, e.end}, std::vector<double>(a.values().begin(), a.values().end()));
    }

    case OpKind::add_tiled: {
      const Tensor& x = *in[0];
      const Tensor& y = *in[1];
      require_rank2(e.kind, x);
      require_rank2(e.kind, y);
      if (x.cols() != y.cols() || y.rows() == 0 || x.rows() % y.rows() != 0)
        shape_error(e.kind, x, y);
      Tensor out = x;
      auto o = out.values();
      auto yv = y.values();
      const std::size_t block = y.size();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += yv[i % block];
      return out;
    }

    case OpKind::block_weighted_sum: {
      const Tensor& w = *in[0];
      const Tensor& h = *in[1];
      require_rank2(e.kind, w);
      require_rank2(e.kind, h);
      const std::size_t m = w.rows();
      const std::size_t k = w.cols();
      if (h.rows() != k * m) shape_error(e.kind, w, h);
      const std::size_t n = h.cols();
      Tensor out = Tensor::matrix(m, n);
      for (std::size_t t = 0; t < k; ++t)
        for (std::size_t b = 0; b < m; ++b) {
          const double wt = w(b, t);
          const double* src = h.values().data() + (t * m + b) * n;
          double* dst = out.values().data() + b * n;
          for (std::size_t c = 0; c < n; ++c) dst[c] += wt * src[c];
        }
      return out;
    }
  }
  throw std::logic_error("unknown op kind");
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::invalid_argument("variable is not bound to a tape");
  return *a.tape;
}

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("variables live on different tapes");
  return tape_of(a);
}

Var unary(OpKind kind, Var a) {
  TapeEntry e;
  e.kind = kind;
  e.inputs = {a.id};
  return tape_of(a).record(std::move(e));
}

Var binary(OpKind kind, Var a, Var b) {
  TapeEntry e;
  e.kind = kind;
  e.inputs = {a.id, b.id};
  return same_tape(a, b).record(std::move(e));
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {
  for (std::size_t extent : shape_)
    if (extent == 0) throw ShapeError("tensor: zero extent in shape");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (std::size_t extent : shape_)
    if (extent == 0) throw ShapeError("tensor: zero extent in shape");
  if (product(shape_) != values_.size())
    throw ShapeError("tensor: " + std::to_string(values_.size()) + " values do not fill shape " +
                     shape_string());
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("tensor: item() on shape " + shape_string());
  return values_[0];
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::softmax_rows: return "softmax-rows";
    case OpKind::log_softmax_rows: return "log-softmax-rows";
    case OpKind::embedding_lookup: return "embedding-lookup";
    case OpKind::sum: return "sum";
    case OpKind::pick: return "pick";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::add_tiled: return "add-tiled";
    case OpKind::block_weighted_sum: return "block-weighted-sum";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_of(*this).value(id); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::parameter(Tensor value, std::string name) {
  TapeEntry e;
  e.kind = OpKind::parameter;
  e.value = std::move(value);
  e.name = std::move(name);
  entries_.push_back(std::move(e));
  return Var{this, entries_.size() - 1};
}

Var Tape::constant(Tensor value) {
  TapeEntry e;
  e.kind = OpKind::constant;
  e.value = std::move(value);
  entries_.push_back(std::move(e));
  return Var{this, entries_.size() - 1};
}

const TapeEntry& Tape::entry(std::size_t id) const {
  if (id >= entries_.size())
    throw std::out_of_range("tape: node " + std::to_string(id) + " is not on this tape");
  return entries_[id];
}

Var Tape::record(TapeEntry e) {
  std::vector<const Tensor*> in;
  in.reserve(e.inputs.size());
  for (std::size_t id : e.inputs) in.push_back(&entry(id).value);
  e.value = compute(e, in);
  entries_.push_back(std::move(e));
  return Var{this, entries_.size() - 1};
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(entries_.size());
  std::vector<const Tensor*> in;
  for (const TapeEntry& e : entries_) {
    in.clear();
    for (std::size_t id : e.inputs) in.push_back(&values[id]);
    values.push_back(compute(e, in));
  }
  return values;
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) { return binary(OpKind::matmul, a, b); }
Var add(Var a, Var b) { return binary(OpKind::add, a, b); }
Var sub(Var a, Var b) { return binary(OpKind::sub, a, b); }
Var mul(Var a, Var b) { return binary(OpKind::mul, a, b); }

Var scale(Var a, double factor) {
  TapeEntry e;
  e.kind = OpKind::scale;
  e.inputs = {a.id};
  e.factor = factor;
  return tape_of(a).record(std::move(e));
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  TapeEntry e;
  e.kind = OpKind::concat;
  e.axis = axis;
  for (const Var& p : parts) {
    if (p.tape != parts[0].tape) throw std::invalid_argument("variables live on different tapes");
    e.inputs.push_back(p.id);
  }
  return tape_of(parts[0]).record(std::move(e));
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  TapeEntry e;
  e.kind = OpKind::slice;
  e.inputs = {a.id};
  e.axis = axis;
  e.begin = begin;
  e.end = end;
  return tape_of(a).record(std::move(e));
}

Var sigmoid(Var a) { return unary(OpKind::sigmoid, a); }
Var tanh(Var a) { return unary(OpKind::tanh, a); }
Var softmax_rows(Var a) { return unary(OpKind::softmax_rows, a); }
Var log_softmax_rows(Var a) { return unary(OpKind::log_softmax_rows, a); }
Var sum(Var a) { return unary(OpKind::sum, a); }
Var transpose(Var a) { return unary(OpKind::transpose, a); }

Var embedding_lookup(Var table, std::span<const int> ids) {
  TapeEntry e;
  e.kind = OpKind::embedding_lookup;
  e.inputs = {table.id};
  e.indices.assign(ids.begin(), ids.end());
  if (e.indices.empty()) throw ShapeError("embedding-lookup: no ids");
  return tape_of(table).record(std::move(e));
}

Var pick(Var a, std::span<const int> idx) {
  TapeEntry e;
  e.kind = OpKind::pick;
  e.inputs = {a.id};
  e.indices.assign(idx.begin(), idx.end());
  return tape_of(a).record(std::move(e));
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  TapeEntry e;
  e.kind = OpKind::reshape;
  e.inputs = {a.id};
  e.begin = rows;
  e.end = cols;
  return tape_of(a).record(std::move(e));
}

Var add_tiled(Var x, Var y) { return binary(OpKind::add_tiled, x, y); }
Var block_weighted_sum(Var weights, Var blocks) {
  return binary(OpKind::block_weighted_sum, weights, blocks);
}

// ---------------------------------------------------------------------------
// Reverse pass

GradientMap backward(const Tape& tape, Var loss) {
  if (loss.tape != &tape) throw std::invalid_argument("backward: loss node is not on this tape");
  const TapeEntry& root = tape.entry(loss.id);
  if (root.value.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + root.value.shape_string());

  const std::size_t n = loss.id + 1;
  std::vector<char> needs(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const TapeEntry& e = tape.entry(i);
    if (e.kind == OpKind::parameter) {
      needs[i] = 1;
      continue;
    }
    for (std::size_t in : e.inputs)
      if (needs[in]) {
        needs[i] = 1;
        break;
      }
  }

  std::vector<Tensor> grads(n);
  auto grad_for = [&](std::size_t id) -> Tensor& {
    if (grads[id].empty()) grads[id] = Tensor(tape.value(id).shape(), 0.0);
    return grads[id];
  };
  grads[loss.id] = Tensor(root.value.shape(), 1.0);

  for (std::size_t i = n; i-- > 0;) {
    if (grads[i].empty() || !needs[i]) continue;
    const TapeEntry& e = tape.entry(i);
    const Tensor& g = grads[i];
    const Tensor& y = e.value;
    auto input = [&](std::size_t k) -> const Tensor& { return tape.value(e.inputs[k]); };
    auto wants = [&](std::size_t k) { return needs[e.inputs[k]] != 0; };

    switch (e.kind) {
      case OpKind::parameter:
      case OpKind::constant:
        break;

      case OpKind::matmul: {
        if (wants(0)) as_matrix(grad_for(e.inputs[0])).noalias() += as_matrix(g) * as_matrix(input(1)).transpose();
        if (wants(1)) as_matrix(grad_for(e.inputs[1])).noalias() += as_matrix(input(0)).transpose() * as_matrix(g);
        break;
      }

      case OpKind::add: {
        if (wants(0)) add_into(grad_for(e.inputs[0]), g);
        if (wants(1)) {
          Tensor& gb = grad_for(e.inputs[1]);
          if (gb.size() == g.size()) {
            add_into(gb, g);
          } else {
            const std::size_t cols = g.cols();
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < cols; ++c) gb(0, c) += g(r, c);
          }
        }
        break;
      }

      case OpKind::sub: {
        if (wants(0)) add_into(grad_for(e.inputs[0]), g);
        if (wants(1)) {
          auto gb = grad_for(e.inputs[1]).values();
          auto gv = g.values();
          for (std::size_t k = 0; k < gv.size(); ++k) gb[k] -= gv[k];
        }
        break;
      }

      case OpKind::mul: {
        auto gv = g.values();
        if (wants(0)) {
          auto ga = grad_for(e.inputs[0]).values();
          auto bv = input(1).values();
          for (std::size_t k = 0; k < gv.size(); ++k) ga[k] += gv[k] * bv[k];
        }
        if (wants(1)) {
          auto gb = grad_for(e.inputs[1]).values();
          auto av = input(0).values();
          for (std::size_t k = 0; k < gv.size(); ++k) gb[k] += gv[k] * av[k];
        }
        break;
      }

      case OpKind::scale: {
        auto ga = grad_for(e.inputs[0]).values();
        auto gv = g.values();
        for (std::size_t k = 0; k < gv.size(); ++k) ga[k] += e.factor * gv[k];
        break;
      }

      case OpKind::concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < e.inputs.size(); ++k) {
          const Tensor& part = input(k);
          if (wants(k)) {
            Tensor& gp = grad_for(e.inputs[k]);
            if (e.axis == 0) {
              auto dst = gp.values();
              const double* src = g.values().data() + offset * g.cols();
              for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += src[q];
            } else {
              for (std::size_t r = 0; r < part.rows(); ++r)
                for (std::size_t c = 0; c < part.cols(); ++c) gp(r, c) += g(r, offset + c);
            }
          }
          offset += e.axis == 0 ? part.rows() : part.cols();
        }
        break;
      }

      case OpKind::slice: {
        Tensor& ga = grad_for(e.inputs[0]);
        if (e.axis == 0) {
          double* dst = ga.values().data() + e.begin * ga.cols();
          auto src = g.values();
          for (std::size_t q = 0; q < src.size(); ++q) dst[q] += src[q];
        } else {
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) ga(r, e.begin + c) += g(r, c);
        }
        break;
      }

      case OpKind::sigmoid: {
        auto ga = grad_for(e.inputs[0]).values();
        auto gv = g.values();
        auto yv = y.values();
        for (std::size_t k = 0; k < gv.size(); ++k) ga[k] += gv[k] * yv[k] * (1.0 - yv[k]);
        break;
      }

      case OpKind::tanh: {
        auto ga = grad_for(e.inputs[0]).values();
        auto gv = g.values();
        auto yv = y.values();
        for (std::size_t k = 0; k < gv.size(); ++k) ga[k] += gv[k] * (1.0 - yv[k] * yv[k]);
        break;
      }

      case OpKind::softmax_rows: {
        Tensor& ga = grad_for(e.inputs[0]);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < cols; ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
        }
        break;
      }

      case OpKind::log_softmax_rows: {
        Tensor& ga = grad_for(e.inputs[0]);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double total = 0.0;
          for (std::size_t c = 0; c < cols; ++c) total += g(r, c);
          for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * total;
        }
        break;
      }

      case OpKind::embedding_lookup: {
        Tensor& gt = grad_for(e.inputs[0]);
        const std::size_t d = gt.cols();
        for (std::size_t r = 0; r < e.indices.size(); ++r) {
          double* dst = gt.values().data() + static_cast<std::size_t>(e.indices[r]) * d;
          const double* src = g.values().data() + r * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
        break;
      }

      case OpKind::sum: {
        const double gs = g.item();
        for (double& v : grad_for(e.inputs[0]).values()) v += gs;
        break;
      }

      case OpKind::pick: {
        Tensor& ga = grad_for(e.inputs[0]);
        for (std::size_t r = 0; r < e.indices.size(); ++r)
          if (e.indices[r] >= 0) ga(r, static_cast<std::size_t>(e.indices[r])) += g(r, 0);
        break;
      }

      case OpKind::transpose: {
        Tensor& ga = grad_for(e.inputs[0]);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
        break;
      }

      case OpKind::reshape: {
        add_into(grad_for(e.inputs[0]), Tensor(input(0).shape(),
                                               std::vector<double>(g.values().begin(), g.values().end())));
        break;
      }

      case OpKind::add_tiled: {
        if (wants(0)) add_into(grad_for(e.inputs[0]), g);
        if (wants(1)) {
          auto gy = grad_for(e.inputs[1]).values();
          auto gv = g.values();
          const std::size_t block = gy.size();
          for (std::size_t k = 0; k < gv.size(); ++k) gy[k % block] += gv[k];
        }
        break;
      }

      case OpKind::block_weighted_sum: {
        const Tensor& w = input(0);
        const Tensor& h = input(1);
        const std::size_t m = w.rows();
        const std::size_t k = w.cols();
        const std::size_t cols = h.cols();
        Tensor* gw = wants(0) ? &grad_for(e.inputs[0]) : nullptr;
        Tensor* gh = wants(1) ? &grad_for(e.inputs[1]) : nullptr;
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t b = 0; b < m; ++b) {
            const double* gb = g.values().data() + b * cols;
            const std::size_t row = t * m + b;
            if (gw) {
              const double* hr = h.values().data() + row * cols;
              double dot = 0.0;
              for (std::size_t c = 0; c < cols; ++c) dot += gb[c] * hr[c];
              (*gw)(b, t) += dot;
            }
            if (gh) {
              const double wt = w(b, t);
              double* dst = gh->values().data() + row * cols;
              for (std::size_t c = 0; c < cols; ++c) dst[c] += wt * gb[c];
            }
          }
        break;
      }
    }
  }

  GradientMap out;
  for (std::size_t i = 0; i < n; ++i) {
    if (tape.entry(i).kind != OpKind::parameter) continue;
    out.emplace(i, grads[i].empty() ? Tensor(tape.value(i).shape(), 0.0) : std::move(grads[i]));
  }
  // Parameters registered after the loss still get a (zero) entry.
  for (std::size_t i = n; i < tape.size(); ++i)
    if (tape.entry(i).kind == OpKind::parameter) out.emplace(i, Tensor(tape.value(i).shape(), 0.0));
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference check

namespace {

double evaluate(const TapeFunction& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  const double v = f(tape, vars).value().item();
  if (!std::isfinite(v)) throw std::domain_error("check_gradients: non-finite objective value");
  return v;
}

}  // namespace

GradientCheckResult check_gradients(const TapeFunction& f, std::span<const Tensor> params,
                                    double h, unsigned threads) {
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("check_gradients: h must be in (0, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    Var loss = f(tape, vars);
    if (!std::isfinite(loss.value().item()))
      throw std::domain_error("check_gradients: non-finite objective value");
    GradientMap grads = backward(tape, loss);
    for (const Var& v : vars) analytic.push_back(grads.at(v.id));
  }

  struct Slot {
    std::size_t param;
    std::size_t element;
  };
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t k = 0; k < params[p].size(); ++k) slots.push_back({p, k});

  threads = std::max(1u, threads);
  std::vector<GradientCheckResult> partial(threads);
  auto worker = [&](unsigned w) {
    std::vector<Tensor> local(params.begin(), params.end());
    GradientCheckResult& res = partial[w];
    for (std::size_t s = w; s < slots.size(); s += threads) {
      const auto [p, k] = slots[s];
      const double original = local[p].values()[k];
      local[p].values()[k] = original + h;
      const double up = evaluate(f, local);
      local[p].values()[k] = original - h;
      const double down = evaluate(f, local);
      local[p].values()[k] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p].values()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++res.elements_checked;
      if (res.elements_checked == 1 || rel > res.max_relative_error) {
        res.max_relative_error = rel;
        res.worst_param = p;
        res.worst_element = k;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }

  GradientCheckResult total;
  std::size_t checked = 0;
  for (const auto& r : partial) {
    checked += r.elements_checked;
    if (r.elements_checked > 0 && r.max_relative_error >= total.max_relative_error) total = r;
  }
  total.elements_checked = checked;
  return total;
}

}  // namespace snmt
