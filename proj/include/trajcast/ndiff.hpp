#pragma once

// Minimal define-by-run reverse-mode differentiation over dense Eigen
// matrices. A Tape records nodes in creation order, so node indices are a
// topological order and backward() is a single reverse sweep.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "trajcast/common.hpp"

namespace trajcast::ndiff {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Op {
  constant,
  parameter,
  matmul,
  add,
  add_row,
  sub,
  mul,
  scale,
  one_minus,
  sigmoid,
  tanh,
  concat_cols,
  select_cols,
  where,
  sum,
  sum_over,
  mean_over,
  sum_squares,
  binary_cross_entropy,
};

inline const char* op_name(Op op);

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Named parameter matrices with gradient accumulators. Iteration and the
// flat view follow lexicographic name order (std::map ordering).
template <typename Scalar>
class BasicParamStore {
 public:
  using MatrixType = DenseMatrix<Scalar>;
  using VectorType = DenseVector<Scalar>;

  struct Entry {
    MatrixType value;
    MatrixType grad;
  };

  void add(const std::string& name, MatrixType value) {
    if (entries_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    MatrixType grad = MatrixType::Zero(value.rows(), value.cols());
    entries_.emplace(name, Entry{std::move(value), std::move(grad)});
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const MatrixType& value(const std::string& name) const { return at(name).value; }
  MatrixType& value(const std::string& name) { return at(name).value; }
  const MatrixType& grad(const std::string& name) const { return at(name).grad; }
  MatrixType& grad(const std::string& name) { return at(name).grad; }

  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, e] : entries_) e.grad.setZero();
  }

  VectorType flatten() const { return gather([](const Entry& e) -> const MatrixType& { return e.value; }); }
  VectorType flat_grad() const { return gather([](const Entry& e) -> const MatrixType& { return e.grad; }); }

  void unflatten(const VectorType& flat) {
    if (flat.size() != size()) {
      throw ShapeError("unflatten: expected " + std::to_string(size()) + " values, got " +
                       std::to_string(flat.size()));
    }
    Eigen::Index offset = 0;
    for (auto& [name, e] : entries_) {
      // Row-major walk so the flat layout matches the serialized layout.
      for (Eigen::Index r = 0; r < e.value.rows(); ++r)
        for (Eigen::Index c = 0; c < e.value.cols(); ++c) e.value(r, c) = flat(offset++);
    }
  }

  // Human-readable "name[r,c]" for a flat coordinate.
  std::string coordinate_name(Eigen::Index flat_index) const {
    Eigen::Index offset = 0;
    for (const auto& [name, e] : entries_) {
      if (flat_index < offset + e.value.size()) {
        const Eigen::Index k = flat_index - offset;
        return name + "[" + std::to_string(k / e.value.cols()) + "," + std::to_string(k % e.value.cols()) + "]";
      }
      offset += e.value.size();
    }
    return "<out of range>";
  }

 private:
  Entry& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  template <typename Pick>
  VectorType gather(Pick pick) const {
    VectorType flat(size());
    Eigen::Index offset = 0;
    for (const auto& [name, e] : entries_) {
      const MatrixType& m = pick(e);
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat(offset++) = m(r, c);
    }
    return flat;
  }

  std::map<std::string, Entry> entries_;
};

template <typename Scalar>
class BasicTape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
struct BasicVar {
  BasicTape<Scalar>* tape = nullptr;
  int index = -1;

  const DenseMatrix<Scalar>& value() const { return tape->value(index); }
  const DenseMatrix<Scalar>& grad() const { return tape->grad(index); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }
};

template <typename Scalar>
class BasicTape {
 public:
  using MatrixType = DenseMatrix<Scalar>;
  using Var = BasicVar<Scalar>;
  using Store = BasicParamStore<Scalar>;
  using Backward = std::function<void(BasicTape&, int)>;

  struct Node {
    MatrixType value;
    MatrixType grad;
    Op op;
    std::array<int, 2> inputs{-1, -1};
    Backward backward;
    MatrixType* sink = nullptr;  // parameter gradient destination
  };

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var constant(MatrixType value) { return push(std::move(value), Op::constant, {-1, -1}, nullptr); }

  // Binds a parameter; repeated calls with the same name return the same node.
  Var param(Store& store, const std::string& name) {
    auto it = params_.find(name);
    if (it != params_.end()) return Var{this, it->second};
    Var v = push(store.value(name), Op::parameter, {-1, -1}, nullptr);
    nodes_[v.index].sink = &store.grad(name);
    params_.emplace(name, v.index);
    return v;
  }

  Var push(MatrixType value, Op op, std::array<int, 2> inputs, Backward backward) {
    nodes_.push_back(Node{std::move(value), MatrixType(), op, inputs, std::move(backward), nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const MatrixType& value(int i) const { return nodes_[static_cast<std::size_t>(i)].value; }
  const MatrixType& grad(int i) const { return nodes_[static_cast<std::size_t>(i)].grad; }
  MatrixType& grad_mut(int i) { return nodes_[static_cast<std::size_t>(i)].grad; }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar output; parameter gradients are added to
  // their ParamStore accumulators (callers zero them between steps).
  void backward(Var output) {
    if (output.tape != this) throw ShapeError("backward: output belongs to a different tape");
    const MatrixType& out = value(output.index);
    if (out.rows() != 1 || out.cols() != 1) {
      throw ShapeError("backward: output must be 1x1, got " + std::to_string(out.rows()) + "x" +
                       std::to_string(out.cols()));
    }
    for (std::size_t i = 0; i <= static_cast<std::size_t>(output.index); ++i) {
      nodes_[i].grad = MatrixType::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
    }
    nodes_[static_cast<std::size_t>(output.index)].grad(0, 0) = Scalar(1);
    for (int i = output.index; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward) n.backward(*this, i);
    }
    for (std::size_t i = 0; i <= static_cast<std::size_t>(output.index); ++i) {
      if (nodes_[i].sink) *nodes_[i].sink += nodes_[i].grad;
    }
  }

 private:
  std::deque<Node> nodes_;
  std::map<std::string, int> params_;
};

namespace detail {

template <typename Scalar>
std::string shape_of(const DenseMatrix<Scalar>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Scalar>
[[noreturn]] void shape_mismatch(Op op, const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_of<Scalar>(a.value()) + " vs " +
                   shape_of<Scalar>(b.value()));
}

template <typename Scalar>
void same_tape(Op op, const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  if (a.tape != b.tape || a.tape == nullptr) throw ShapeError(std::string(op_name(op)) + ": operands on different tapes");
}

template <typename Scalar>
void same_shape(Op op, const BasicVar<Scalar>& a, const BasicVar<Scalar>& b) {
  same_tape(op, a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

}  // namespace detail

inline const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_row: return "add_row";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::one_minus: return "one_minus";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::concat_cols: return "concat_cols";
    case Op::select_cols: return "select_cols";
    case Op::where: return "where";
    case Op::sum: return "sum";
    case Op::sum_over: return "sum_over";
    case Op::mean_over: return "mean_over";
    case Op::sum_squares: return "sum_squares";
    case Op::binary_cross_entropy: return "binary_cross_entropy";
  }
  return "?";
}

// (r x k) * (k x c) -> (r x c)
template <typename Scalar>
BasicVar<Scalar> matmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::same_tape(Op::matmul, a, b);
  if (a.cols() != b.rows()) detail::shape_mismatch(Op::matmul, a, b);
  return a.tape->push(a.value() * b.value(), Op::matmul, {a.index, b.index}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    const auto& g = n.grad;
    t.grad_mut(n.inputs[0]).noalias() += g * t.value(n.inputs[1]).transpose();
    t.grad_mut(n.inputs[1]).noalias() += t.value(n.inputs[0]).transpose() * g;
  });
}

template <typename Scalar>
BasicVar<Scalar> add(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::same_shape(Op::add, a, b);
  return a.tape->push(a.value() + b.value(), Op::add, {a.index, b.index}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]) += n.grad;
    t.grad_mut(n.inputs[1]) += n.grad;
  });
}

// (r x c) + (1 x c) broadcast over rows; used for biases.
template <typename Scalar>
BasicVar<Scalar> add_row(BasicVar<Scalar> a, BasicVar<Scalar> row) {
  detail::same_tape(Op::add_row, a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) detail::shape_mismatch(Op::add_row, a, row);
  DenseMatrix<Scalar> v = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(v), Op::add_row, {a.index, row.index}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]) += n.grad;
    t.grad_mut(n.inputs[1]) += n.grad.colwise().sum();
  });
}

template <typename Scalar>
BasicVar<Scalar> sub(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::same_shape(Op::sub, a, b);
  return a.tape->push(a.value() - b.value(), Op::sub, {a.index, b.index}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]) += n.grad;
    t.grad_mut(n.inputs[1]) -= n.grad;
  });
}

// Elementwise product.
template <typename Scalar>
BasicVar<Scalar> mul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::same_shape(Op::mul, a, b);
  DenseMatrix<Scalar> v = a.value().cwiseProduct(b.value());
  return a.tape->push(std::move(v), Op::mul, {a.index, b.index}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]) += n.grad.cwiseProduct(t.value(n.inputs[1]));
    t.grad_mut(n.inputs[1]) += n.grad.cwiseProduct(t.value(n.inputs[0]));
  });
}

template <typename Scalar>
BasicVar<Scalar> scale(BasicVar<Scalar> a, Scalar s) {
  return a.tape->push(a.value() * s, Op::scale, {a.index, -1}, [s](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]) += n.grad * s;
  });
}

// 1 - a, elementwise.
template <typename Scalar>
BasicVar<Scalar> one_minus(BasicVar<Scalar> a) {
  DenseMatrix<Scalar> v = (Scalar(1) - a.value().array()).matrix();
  return a.tape->push(std::move(v), Op::one_minus, {a.index, -1}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]) -= n.grad;
  });
}

template <typename Scalar>
BasicVar<Scalar> sigmoid(BasicVar<Scalar> a) {
  DenseMatrix<Scalar> v = a.value().unaryExpr([](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
  return a.tape->push(std::move(v), Op::sigmoid, {a.index, -1}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    const auto& y = n.value.array();
    t.grad_mut(n.inputs[0]).array() += n.grad.array() * y * (Scalar(1) - y);
  });
}

template <typename Scalar>
BasicVar<Scalar> tanh(BasicVar<Scalar> a) {
  DenseMatrix<Scalar> v = a.value().unaryExpr([](Scalar x) { return std::tanh(x); });
  return a.tape->push(std::move(v), Op::tanh, {a.index, -1}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    const auto& y = n.value.array();
    t.grad_mut(n.inputs[0]).array() += n.grad.array() * (Scalar(1) - y * y);
  });
}

// [a | b]
template <typename Scalar>
BasicVar<Scalar> concat_cols(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  detail::same_tape(Op::concat_cols, a, b);
  if (a.rows() != b.rows()) detail::shape_mismatch(Op::concat_cols, a, b);
  DenseMatrix<Scalar> v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  return a.tape->push(std::move(v), Op::concat_cols, {a.index, b.index}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    const Eigen::Index ca = t.value(n.inputs[0]).cols();
    t.grad_mut(n.inputs[0]) += n.grad.leftCols(ca);
    t.grad_mut(n.inputs[1]) += n.grad.rightCols(n.grad.cols() - ca);
  });
}

// Columns [first, first + count).
template <typename Scalar>
BasicVar<Scalar> select_cols(BasicVar<Scalar> a, Eigen::Index first, Eigen::Index count) {
  if (first < 0 || count < 0 || first + count > a.cols()) {
    throw ShapeError("select_cols: columns [" + std::to_string(first) + "," + std::to_string(first + count) +
                     ") out of range for " + detail::shape_of<Scalar>(a.value()));
  }
  DenseMatrix<Scalar> v = a.value().middleCols(first, count);
  return a.tape->push(std::move(v), Op::select_cols, {a.index, -1}, [first, count](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]).middleCols(first, count) += n.grad;
  });
}

// Elementwise select: observed(r,c) where mask(r,c) != 0, otherwise fallback(r,c).
// The observed values are data, not a node; entries outside the mask are never
// read, so their contents cannot influence the value or any gradient.
template <typename Scalar>
BasicVar<Scalar> where(const DenseMatrix<Scalar>& mask, const DenseMatrix<Scalar>& observed,
                       BasicVar<Scalar> fallback) {
  if (mask.rows() != fallback.rows() || mask.cols() != fallback.cols() || observed.rows() != mask.rows() ||
      observed.cols() != mask.cols()) {
    throw ShapeError("where: shape mismatch " + detail::shape_of<Scalar>(mask) + " vs " +
                     detail::shape_of<Scalar>(fallback.value()));
  }
  DenseMatrix<Scalar> v = fallback.value();
  for (Eigen::Index c = 0; c < v.cols(); ++c)
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      if (mask(r, c) != Scalar(0)) v(r, c) = observed(r, c);
  return fallback.tape->push(std::move(v), Op::where, {fallback.index, -1}, [mask](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    auto& g = t.grad_mut(n.inputs[0]);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        if (mask(r, c) == Scalar(0)) g(r, c) += n.grad(r, c);
  });
}

template <typename Scalar>
BasicVar<Scalar> sum(BasicVar<Scalar> a) {
  DenseMatrix<Scalar> v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape->push(std::move(v), Op::sum, {a.index, -1}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]).array() += n.grad(0, 0);
  });
}

// Sum of the entries where mask != 0; other entries are ignored entirely.
template <typename Scalar>
BasicVar<Scalar> sum_over(const DenseMatrix<Scalar>& mask, BasicVar<Scalar> a) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeError("sum_over: shape mismatch " + detail::shape_of<Scalar>(mask) + " vs " +
                     detail::shape_of<Scalar>(a.value()));
  }
  Scalar s(0);
  for (Eigen::Index c = 0; c < mask.cols(); ++c)
    for (Eigen::Index r = 0; r < mask.rows(); ++r)
      if (mask(r, c) != Scalar(0)) s += a.value()(r, c);
  DenseMatrix<Scalar> v(1, 1);
  v(0, 0) = s;
  return a.tape->push(std::move(v), Op::sum_over, {a.index, -1}, [mask](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    auto& g = t.grad_mut(n.inputs[0]);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        if (mask(r, c) != Scalar(0)) g(r, c) += n.grad(0, 0);
  });
}

// Mean over the masked entries; an empty mask yields 0 with zero gradient.
template <typename Scalar>
BasicVar<Scalar> mean_over(const DenseMatrix<Scalar>& mask, BasicVar<Scalar> a) {
  const Eigen::Index count = (mask.array() != Scalar(0)).count();
  BasicVar<Scalar> s = sum_over(mask, a);
  return scale(s, count > 0 ? Scalar(1) / Scalar(count) : Scalar(0));
}

// Sum of squared entries.
template <typename Scalar>
BasicVar<Scalar> sum_squares(BasicVar<Scalar> a) {
  DenseMatrix<Scalar> v(1, 1);
  v(0, 0) = a.value().squaredNorm();
  return a.tape->push(std::move(v), Op::sum_squares, {a.index, -1}, [](BasicTape<Scalar>& t, int self) {
    const auto& n = t.node(self);
    t.grad_mut(n.inputs[0]) += (Scalar(2) * n.grad(0, 0)) * t.value(n.inputs[0]);
  });
}

// Mean over rows of -[z log p + (1-z) log(1-p)] for a column of probabilities.
// p is clamped to [clamp, 1 - clamp]; clamped entries pass no gradient.
template <typename Scalar>
BasicVar<Scalar> binary_cross_entropy(BasicVar<Scalar> p, const DenseMatrix<Scalar>& labels,
                                      Scalar clamp = Scalar(1e-12)) {
  if (p.cols() != 1 || labels.cols() != 1 || labels.rows() != p.rows() || p.rows() == 0) {
    throw ShapeError("binary_cross_entropy: shape mismatch " + detail::shape_of<Scalar>(p.value()) + " vs " +
                     detail::shape_of<Scalar>(labels));
  }
  const Eigen::Index n = p.rows();
  Scalar total(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar q = std::clamp(p.value()(i, 0), clamp, Scalar(1) - clamp);
    const Scalar z = labels(i, 0);
    total -= z * std::log(q) + (Scalar(1) - z) * std::log(Scalar(1) - q);
  }
  DenseMatrix<Scalar> v(1, 1);
  v(0, 0) = total / Scalar(n);
  return p.tape->push(std::move(v), Op::binary_cross_entropy, {p.index, -1},
                      [labels, clamp](BasicTape<Scalar>& t, int self) {
                        const auto& node = t.node(self);
                        const auto& pv = t.value(node.inputs[0]);
                        auto& g = t.grad_mut(node.inputs[0]);
                        const Scalar scale_out = node.grad(0, 0) / Scalar(pv.rows());
                        for (Eigen::Index i = 0; i < pv.rows(); ++i) {
                          const Scalar q = pv(i, 0);
                          if (q < clamp || q > Scalar(1) - clamp) continue;
                          const Scalar z = labels(i, 0);
                          g(i, 0) += scale_out * (-z / q + (Scalar(1) - z) / (Scalar(1) - q));
                        }
                      });
}

template <typename Scalar>
BasicVar<Scalar> operator+(BasicVar<Scalar> a, BasicVar<Scalar> b) { return add(a, b); }
template <typename Scalar>
BasicVar<Scalar> operator-(BasicVar<Scalar> a, BasicVar<Scalar> b) { return sub(a, b); }

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_coordinate = -1;
  std::string worst_name;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of the analytic gradient. `loss` must evaluate
// the loss at the store's current values and add its gradient into the
// store's accumulators; it is called once for the analytic gradient and
// twice per coordinate.
template <typename Scalar, typename LossFn>
GradCheckResult grad_check(LossFn&& loss, BasicParamStore<Scalar>& params, Scalar eps) {
  if (!(eps > Scalar(0))) throw ConfigError("grad_check: eps must be positive");
  params.zero_grad();
  loss(params);
  const DenseVector<Scalar> analytic = params.flat_grad();
  const DenseVector<Scalar> base = params.flatten();

  GradCheckResult result;
  DenseVector<Scalar> probe = base;
  for (Eigen::Index k = 0; k < base.size(); ++k) {
    probe(k) = base(k) + eps;
    params.unflatten(probe);
    const Scalar up = loss(params);
    probe(k) = base(k) - eps;
    params.unflatten(probe);
    const Scalar down = loss(params);
    probe(k) = base(k);
    if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down))) {
      params.unflatten(base);
      throw NumericalError("grad_check: non-finite loss while probing " + params.coordinate_name(k));
    }
    const Scalar numeric = (up - down) / (Scalar(2) * eps);
    const Scalar a = analytic(k);
    const Scalar rel = std::abs(a - numeric) / std::max(Scalar(1e-8), std::abs(a) + std::abs(numeric));
    if (static_cast<double>(rel) > result.max_rel_error || result.worst_coordinate < 0) {
      result.max_rel_error = static_cast<double>(rel);
      result.worst_coordinate = k;
      result.analytic = static_cast<double>(a);
      result.numeric = static_cast<double>(numeric);
    }
  }
  params.unflatten(base);
  params.zero_grad();
  if (result.worst_coordinate >= 0) result.worst_name = params.coordinate_name(result.worst_coordinate);
  return result;
}

using ParamStore = BasicParamStore<double>;
using Tape = BasicTape<double>;
using Var = BasicVar<double>;

}  // namespace trajcast::ndiff
