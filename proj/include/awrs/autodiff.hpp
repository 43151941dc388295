#pragma once

// Minimal reverse-mode differentiation over row-major 2-D tensors.
//
// A Tape records every primitive executed on it; Var is a handle to one recorded node.
// Parameters live outside tapes and receive gradients through leaf nodes, so several
// tapes (one per training instance) can accumulate into the same Parameter before an
// optimizer step. A tape and its Vars are confined to one thread.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace awrs::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <typename Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(Shape s, Real fill = Real(0)) : shape(s), data(s.size(), fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::initializer_list<Real> values);

  std::size_t rows() const { return shape.rows; }
  std::size_t cols() const { return shape.cols; }
  Real& at(std::size_t r, std::size_t c) { return data[r * shape.cols + c]; }
  Real at(std::size_t r, std::size_t c) const { return data[r * shape.cols + c]; }
  std::span<Real> row(std::size_t r) { return {data.data() + r * shape.cols, shape.cols}; }
  std::span<const Real> row(std::size_t r) const {
    return {data.data() + r * shape.cols, shape.cols};
  }
};

// A named trainable tensor with its gradient accumulator.
//
// Row-sparse parameters (embedding tables) track which rows received gradient since the
// last zero_grad so optimizers and zeroing can skip untouched rows.
template <typename Real>
class Parameter {
 public:
  Parameter(std::string name, Shape shape, bool row_sparse = false);

  const std::string& name() const { return name_; }
  Shape shape() const { return value_.shape; }
  Tensor<Real>& value() { return value_; }
  const Tensor<Real>& value() const { return value_; }
  Tensor<Real>& grad() { return grad_; }
  const Tensor<Real>& grad() const { return grad_; }

  bool row_sparse() const { return row_sparse_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool on) { trainable_ = on; }

  std::span<const std::size_t> touched_rows() const { return touched_; }
  void mark_row(std::size_t r);
  void zero_grad();

 private:
  std::string name_;
  Tensor<Real> value_;
  Tensor<Real> grad_;
  bool row_sparse_;
  bool trainable_ = true;
  std::vector<std::uint8_t> touched_flag_;
  std::vector<std::size_t> touched_;
};

template <typename Real>
class Tape;

template <typename Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor<Real>& value() const;
  Shape shape() const { return value().shape; }
  // Value of a 1x1 tensor.
  Real item() const;
};

// The computation record: nodes in execution (topological) order.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value);
  // Leaf for a dense parameter; repeated calls return the same node.
  Var<Real> leaf(Parameter<Real>& p);
  Var<Real> record(std::string_view op, Tensor<Real> value,
                   std::initializer_list<Var<Real>> inputs, BackwardFn backward);
  Var<Real> record(std::string_view op, Tensor<Real> value, std::span<const Var<Real>> inputs,
                   BackwardFn backward);
  // A node with no tape inputs whose gradient is routed outside the tape (e.g. into a
  // row-sparse parameter).
  Var<Real> record_source(std::string_view op, Tensor<Real> value, bool requires_grad,
                          BackwardFn backward);

  // Reverse sweep from a 1x1 loss. Parameter gradients accumulate (+=).
  void backward(Var<Real> loss);

  const Tensor<Real>& value(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated (zeroed) on first access. For parameter leaves
  // this is the parameter's own accumulator.
  Tensor<Real>& grad(std::uint32_t id);
  bool has_grad(std::uint32_t id) const;
  Parameter<Real>* parameter(std::uint32_t id) const { return nodes_[id].param; }

  std::size_t size() const { return nodes_.size(); }
  std::string_view op(std::uint32_t id) const { return nodes_[id].op; }
  std::span<const std::uint32_t> inputs(std::uint32_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    std::string_view op;
    Tensor<Real> value;
    Tensor<Real> grad;
    bool grad_ready = false;
    bool requires_grad = false;
    Parameter<Real>* param = nullptr;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
  };

  Var<Real> push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Real>*, std::uint32_t> leaves_;
};

// Column mask: 1 keeps a position, 0 excludes it from a softmax. Empty means keep all.
using Mask = std::vector<std::uint8_t>;

template <typename Real> Var<Real> matmul(Var<Real> a, Var<Real> b);
// a * b^T
template <typename Real> Var<Real> matmul_transposed(Var<Real> a, Var<Real> b);
template <typename Real> Var<Real> transpose(Var<Real> a);
template <typename Real> Var<Real> add(Var<Real> a, Var<Real> b);
template <typename Real> Var<Real> sub(Var<Real> a, Var<Real> b);
template <typename Real> Var<Real> mul(Var<Real> a, Var<Real> b);
// x (m x n) + bias (1 x n) broadcast over rows.
template <typename Real> Var<Real> add_bias(Var<Real> x, Var<Real> bias);
template <typename Real> Var<Real> scale(Var<Real> x, Real c);
template <typename Real> Var<Real> add_scalar(Var<Real> x, Real c);
// 1 - x
template <typename Real> Var<Real> one_minus(Var<Real> x);
template <typename Real> Var<Real> sigmoid(Var<Real> x);
template <typename Real> Var<Real> tanh(Var<Real> x);
template <typename Real> Var<Real> relu(Var<Real> x);
template <typename Real> Var<Real> exp(Var<Real> x);
template <typename Real> Var<Real> sin(Var<Real> x);
// Row-wise softmax. Masked columns get probability 0; a fully masked row is all zeros.
template <typename Real> Var<Real> softmax_rows(Var<Real> x, const Mask& mask = {});
template <typename Real> Var<Real> concat_cols(std::span<const Var<Real>> parts);
template <typename Real> Var<Real> concat_rows(std::span<const Var<Real>> parts);
template <typename Real> Var<Real> concat_cols(std::initializer_list<Var<Real>> parts);
template <typename Real> Var<Real> slice_cols(Var<Real> x, std::size_t begin, std::size_t end);
template <typename Real> Var<Real> slice_rows(Var<Real> x, std::size_t begin, std::size_t end);
// Repeats a 1 x n row `times` times.
template <typename Real> Var<Real> tile_rows(Var<Real> row, std::size_t times);
// Gathers table rows; the gradient is scattered back into only those rows.
template <typename Real>
Var<Real> embedding_lookup(Tape<Real>& tape, Parameter<Real>& table,
                           std::span<const std::int32_t> indices);
// x * W + b, with b a 1 x out row.
template <typename Real> Var<Real> affine(Var<Real> x, Var<Real> weight, Var<Real> bias);
// Row i becomes [x_{i-h}, ..., x_{i+h}] with zero rows beyond either end.
template <typename Real> Var<Real> sliding_window_concat(Var<Real> x, std::size_t h);
template <typename Real> Var<Real> sum(Var<Real> x);
// -log softmax(scores)[target] for a 1 x C score row, computed with max-subtraction.
template <typename Real> Var<Real> softmax_cross_entropy(Var<Real> scores, std::size_t target);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "param[index]"
};

// Compares reverse-mode gradients with central differences. At most
// `max_coords_per_param` coordinates are sampled from each parameter (0 = all).
template <typename Real>
GradCheckResult grad_check(const std::function<Var<Real>(Tape<Real>&)>& fn,
                           std::span<Parameter<Real>* const> params, Real eps,
                           std::size_t max_coords_per_param = 0, std::uint64_t seed = 0);

// Owns named parameters with stable addresses.
template <typename Real>
class ParameterStore {
 public:
  Parameter<Real>& add(std::string name, Shape shape, bool row_sparse = false);
  Parameter<Real>* find(std::string_view name);
  const Parameter<Real>* find(std::string_view name) const;
  Parameter<Real>& at(std::string_view name);

  std::vector<Parameter<Real>*> all();
  std::vector<const Parameter<Real>*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
};

template <typename Real>
void init_uniform(Parameter<Real>& p, Real range, std::mt19937_64& rng);
// Glorot/Xavier uniform on a (fan_in x fan_out) weight.
template <typename Real>
void init_glorot(Parameter<Real>& p, std::mt19937_64& rng);

}  // namespace awrs::ad
