#include "awrs/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "awrs/error.hpp"

namespace awrs::ad {

std::string to_string(const Shape& s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

namespace {

[[noreturn]] void shape_error(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

template <typename Real>
void expect_same(std::string_view op, Var<Real> a, Var<Real> b) {
  if (a.tape != b.tape) shape_error(op, "operands recorded on different tapes");
  if (!(a.shape() == b.shape())) {
    shape_error(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

// C (m x n) += A (m x k) * B (k x n)
template <typename Real>
void mm_nn(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real a = A[i * k + p];
      const Real* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

// C (m x n) += A (m x k) * B^T, with B stored n x k
template <typename Real>
void mm_nt(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* a = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* b = B + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
      C[i * n + j] += acc;
    }
  }
}

// C (m x n) += A^T * B, with A stored k x m and B stored k x n
template <typename Real>
void mm_tn(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const Real* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Real a = A[p * m + i];
      Real* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
}

template <typename Real>
Real stable_sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

// Elementwise unary op whose derivative is expressed through input and output.
template <typename Real, typename F, typename D>
Var<Real> unary(std::string_view op, Var<Real> x, F f, D dfdx) {
  const auto& xv = x.value();
  Tensor<Real> out(xv.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(xv.data[i]);
  return x.tape->record(op, std::move(out), {x}, [x, dfdx](Tape<Real>& t, std::uint32_t self) {
    if (!t.requires_grad(x.id)) return;
    const auto& g = t.grad(self);
    const auto& xv = t.value(x.id);
    const auto& yv = t.value(self);
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * dfdx(xv.data[i], yv.data[i]);
  });
}

}  // namespace

template <typename Real>
Tensor<Real>::Tensor(std::size_t rows, std::size_t cols, std::initializer_list<Real> values)
    : shape{rows, cols}, data(values) {
  if (data.size() != shape.size()) {
    throw ShapeError("Tensor: " + std::to_string(data.size()) + " values for shape " +
                     to_string(shape));
  }
}

template <typename Real>
Parameter<Real>::Parameter(std::string name, Shape shape, bool row_sparse)
    : name_(std::move(name)), value_(shape), grad_(shape), row_sparse_(row_sparse) {
  if (row_sparse_) touched_flag_.assign(shape.rows, 0);
}

template <typename Real>
void Parameter<Real>::mark_row(std::size_t r) {
  if (!row_sparse_) return;
  if (touched_flag_[r] == 0) {
    touched_flag_[r] = 1;
    touched_.push_back(r);
  }
}

template <typename Real>
void Parameter<Real>::zero_grad() {
  if (!row_sparse_) {
    std::fill(grad_.data.begin(), grad_.data.end(), Real(0));
    return;
  }
  for (auto r : touched_) {
    auto row = grad_.row(r);
    std::fill(row.begin(), row.end(), Real(0));
    touched_flag_[r] = 0;
  }
  touched_.clear();
}

template <typename Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape->value(id);
}

template <typename Real>
Real Var<Real>::item() const {
  const auto& v = value();
  if (v.shape.size() != 1) throw ShapeError("item: expected 1x1, got " + to_string(v.shape));
  return v.data[0];
}

template <typename Real>
Var<Real> Tape<Real>::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) throw Error("tape overflow");
  nodes_.push_back(std::move(node));
  return Var<Real>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
Var<Real> Tape<Real>::constant(Tensor<Real> value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  return push(std::move(node));
}

template <typename Real>
Var<Real> Tape<Real>::leaf(Parameter<Real>& p) {
  if (p.row_sparse()) {
    throw Error("parameter " + p.name() + " is row-sparse; use embedding_lookup");
  }
  auto it = leaves_.find(&p);
  if (it != leaves_.end()) return Var<Real>{this, it->second};
  Node node;
  node.op = "parameter";
  node.param = &p;
  node.requires_grad = p.trainable();
  auto v = push(std::move(node));
  leaves_.emplace(&p, v.id);
  return v;
}

template <typename Real>
Var<Real> Tape<Real>::record(std::string_view op, Tensor<Real> value,
                             std::initializer_list<Var<Real>> inputs, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var<Real>>(inputs.begin(), inputs.size()),
                std::move(backward));
}

template <typename Real>
Var<Real> Tape<Real>::record(std::string_view op, Tensor<Real> value,
                             std::span<const Var<Real>> inputs, BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape != this) shape_error(op, "input recorded on a different tape");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

template <typename Real>
Var<Real> Tape<Real>::record_source(std::string_view op, Tensor<Real> value, bool requires_grad,
                                    BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

template <typename Real>
const Tensor<Real>& Tape<Real>::value(std::uint32_t id) const {
  const auto& node = nodes_[id];
  return node.param != nullptr ? node.param->value() : node.value;
}

template <typename Real>
Tensor<Real>& Tape<Real>::grad(std::uint32_t id) {
  auto& node = nodes_[id];
  if (node.param != nullptr) {
    node.grad_ready = true;
    return node.param->grad();
  }
  if (!node.grad_ready) {
    node.grad = Tensor<Real>(node.value.shape);
    node.grad_ready = true;
  }
  return node.grad;
}

template <typename Real>
bool Tape<Real>::has_grad(std::uint32_t id) const {
  return nodes_[id].grad_ready;
}

template <typename Real>
void Tape<Real>::backward(Var<Real> loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to another tape");
  const auto& lv = value(loss.id);
  if (lv.shape.size() != 1) {
    throw ShapeError("backward: loss must be scalar (1x1), got " + to_string(lv.shape));
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id).data[0] += Real(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.grad_ready || !node.backward) continue;
    node.backward(*this, static_cast<std::uint32_t>(i));
  }
}

template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.tape != b.tape || av.cols() != bv.rows()) {
    shape_error("matmul", to_string(av.shape) + " * " + to_string(bv.shape));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<Real> out({m, n});
  mm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  return a.tape->record("matmul", std::move(out), {a, b},
                        [a, b, m, k, n](Tape<Real>& t, std::uint32_t self) {
                          const auto& g = t.grad(self);
                          if (t.requires_grad(a.id)) {
                            mm_nt(g.data.data(), t.value(b.id).data.data(),
                                  t.grad(a.id).data.data(), m, n, k);
                          }
                          if (t.requires_grad(b.id)) {
                            mm_tn(t.value(a.id).data.data(), g.data.data(),
                                  t.grad(b.id).data.data(), k, m, n);
                          }
                        });
}

template <typename Real>
Var<Real> matmul_transposed(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.tape != b.tape || av.cols() != bv.cols()) {
    shape_error("matmul_transposed", to_string(av.shape) + " * (" + to_string(bv.shape) + ")^T");
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor<Real> out({m, n});
  mm_nt(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  return a.tape->record("matmul_transposed", std::move(out), {a, b},
                        [a, b, m, k, n](Tape<Real>& t, std::uint32_t self) {
                          const auto& g = t.grad(self);
                          if (t.requires_grad(a.id)) {
                            mm_nn(g.data.data(), t.value(b.id).data.data(),
                                  t.grad(a.id).data.data(), m, n, k);
                          }
                          if (t.requires_grad(b.id)) {
                            mm_tn(g.data.data(), t.value(a.id).data.data(),
                                  t.grad(b.id).data.data(), n, m, k);
                          }
                        });
}

template <typename Real>
Var<Real> transpose(Var<Real> a) {
  const auto& av = a.value();
  Tensor<Real> out({av.cols(), av.rows()});
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out.at(j, i) = av.at(i, j);
  return a.tape->record("transpose", std::move(out), {a}, [a](Tape<Real>& t, std::uint32_t self) {
    if (!t.requires_grad(a.id)) return;
    const auto& g = t.grad(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(j, i);
  });
}

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  expect_same("add", a, b);
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape<Real>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    for (auto in : {a, b}) {
      if (!t.requires_grad(in.id)) continue;
      auto& gi = t.grad(in.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) gi.data[i] += g.data[i];
    }
  });
}

template <typename Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  expect_same("sub", a, b);
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape<Real>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a.id)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.requires_grad(b.id)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
    }
  });
}

template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  expect_same("mul", a, b);
  Tensor<Real> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape<Real>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a.id)) {
      const auto& bv = t.value(b.id);
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
    }
    if (t.requires_grad(b.id)) {
      const auto& av = t.value(a.id);
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

template <typename Real>
Var<Real> add_bias(Var<Real> x, Var<Real> bias) {
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (x.tape != bias.tape || bv.rows() != 1 || bv.cols() != xv.cols()) {
    shape_error("add_bias", to_string(xv.shape) + " + " + to_string(bv.shape));
  }
  Tensor<Real> out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += bv.data[j];
  return x.tape->record("add_bias", std::move(out), {x, bias},
                        [x, bias](Tape<Real>& t, std::uint32_t self) {
                          const auto& g = t.grad(self);
                          if (t.requires_grad(x.id)) {
                            auto& gx = t.grad(x.id);
                            for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
                          }
                          if (t.requires_grad(bias.id)) {
                            auto& gb = t.grad(bias.id);
                            for (std::size_t i = 0; i < g.rows(); ++i)
                              for (std::size_t j = 0; j < g.cols(); ++j) gb.data[j] += g.at(i, j);
                          }
                        });
}

template <typename Real>
Var<Real> scale(Var<Real> x, Real c) {
  return unary<Real>(
      "scale", x, [c](Real v) { return v * c; }, [c](Real, Real) { return c; });
}

template <typename Real>
Var<Real> add_scalar(Var<Real> x, Real c) {
  return unary<Real>(
      "add_scalar", x, [c](Real v) { return v + c; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Var<Real> one_minus(Var<Real> x) {
  return unary<Real>(
      "one_minus", x, [](Real v) { return Real(1) - v; }, [](Real, Real) { return Real(-1); });
}

template <typename Real>
Var<Real> sigmoid(Var<Real> x) {
  return unary<Real>(
      "sigmoid", x, [](Real v) { return stable_sigmoid(v); },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Var<Real> tanh(Var<Real> x) {
  return unary<Real>(
      "tanh", x, [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <typename Real>
Var<Real> relu(Var<Real> x) {
  return unary<Real>(
      "relu", x, [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Var<Real> exp(Var<Real> x) {
  return unary<Real>(
      "exp", x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <typename Real>
Var<Real> sin(Var<Real> x) {
  return unary<Real>(
      "sin", x, [](Real v) { return std::sin(v); }, [](Real v, Real) { return std::cos(v); });
}

template <typename Real>
Var<Real> softmax_rows(Var<Real> x, const Mask& mask) {
  const auto& xv = x.value();
  if (!mask.empty() && mask.size() != xv.cols()) {
    shape_error("softmax_rows", "mask length " + std::to_string(mask.size()) + " for " +
                                    to_string(xv.shape));
  }
  Tensor<Real> out(xv.shape);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < xv.cols(); ++j) {
      if (mask.empty() || mask[j] != 0) mx = std::max(mx, xv.at(i, j));
    }
    if (mx == -std::numeric_limits<Real>::infinity()) continue;  // fully masked row
    Real total = 0;
    for (std::size_t j = 0; j < xv.cols(); ++j) {
      if (!mask.empty() && mask[j] == 0) continue;
      out.at(i, j) = std::exp(xv.at(i, j) - mx);
      total += out.at(i, j);
    }
    for (std::size_t j = 0; j < xv.cols(); ++j) out.at(i, j) /= total;
  }
  return x.tape->record("softmax_rows", std::move(out), {x}, [x](Tape<Real>& t, std::uint32_t self) {
    if (!t.requires_grad(x.id)) return;
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      Real dot = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

template <typename Real>
Var<Real> concat_cols(std::span<const Var<Real>> parts) {
  if (parts.empty()) shape_error("concat_cols", "no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows || p.tape != parts[0].tape) {
      shape_error("concat_cols", "row mismatch " + to_string(p.value().shape) + " vs " +
                                     std::to_string(rows) + " rows");
    }
    cols += p.value().cols();
  }
  Tensor<Real> out({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    offsets.push_back(off);
    off += v.cols();
  }
  std::vector<Var<Real>> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(
      "concat_cols", std::move(out), parts,
      [inputs, offsets](Tape<Real>& t, std::uint32_t self) {
        const auto& g = t.grad(self);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!t.requires_grad(inputs[k].id)) continue;
          auto& gi = t.grad(inputs[k].id);
          for (std::size_t i = 0; i < gi.rows(); ++i)
            for (std::size_t j = 0; j < gi.cols(); ++j) gi.at(i, j) += g.at(i, offsets[k] + j);
        }
      });
}

template <typename Real>
Var<Real> concat_cols(std::initializer_list<Var<Real>> parts) {
  return concat_cols(std::span<const Var<Real>>(parts.begin(), parts.size()));
}

template <typename Real>
Var<Real> concat_rows(std::span<const Var<Real>> parts) {
  if (parts.empty()) shape_error("concat_rows", "no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != cols || p.tape != parts[0].tape) {
      shape_error("concat_rows", "column mismatch " + to_string(p.value().shape) + " vs " +
                                     std::to_string(cols) + " cols");
    }
    rows += p.value().rows();
  }
  Tensor<Real> out({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off * cols));
    offsets.push_back(off);
    off += v.rows();
  }
  std::vector<Var<Real>> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(
      "concat_rows", std::move(out), parts,
      [inputs, offsets, cols](Tape<Real>& t, std::uint32_t self) {
        const auto& g = t.grad(self);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!t.requires_grad(inputs[k].id)) continue;
          auto& gi = t.grad(inputs[k].id);
          const Real* src = g.data.data() + offsets[k] * cols;
          for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] += src[i];
        }
      });
}

template <typename Real>
Var<Real> slice_cols(Var<Real> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  if (begin > end || end > xv.cols()) {
    shape_error("slice_cols", "[" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                  to_string(xv.shape));
  }
  Tensor<Real> out({xv.rows(), end - begin});
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out.at(i, j - begin) = xv.at(i, j);
  return x.tape->record("slice_cols", std::move(out), {x},
                        [x, begin](Tape<Real>& t, std::uint32_t self) {
                          if (!t.requires_grad(x.id)) return;
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(x.id);
                          for (std::size_t i = 0; i < g.rows(); ++i)
                            for (std::size_t j = 0; j < g.cols(); ++j) gx.at(i, begin + j) += g.at(i, j);
                        });
}

template <typename Real>
Var<Real> slice_rows(Var<Real> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  if (begin > end || end > xv.rows()) {
    shape_error("slice_rows", "[" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                  to_string(xv.shape));
  }
  const std::size_t cols = xv.cols();
  Tensor<Real> out({end - begin, cols});
  std::copy(xv.data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
            xv.data.begin() + static_cast<std::ptrdiff_t>(end * cols), out.data.begin());
  return x.tape->record("slice_rows", std::move(out), {x},
                        [x, begin, cols](Tape<Real>& t, std::uint32_t self) {
                          if (!t.requires_grad(x.id)) return;
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(x.id);
                          Real* dst = gx.data.data() + begin * cols;
                          for (std::size_t i = 0; i < g.data.size(); ++i) dst[i] += g.data[i];
                        });
}

template <typename Real>
Var<Real> tile_rows(Var<Real> row, std::size_t times) {
  const auto& rv = row.value();
  if (rv.rows() != 1) shape_error("tile_rows", "expected a 1 x n row, got " + to_string(rv.shape));
  Tensor<Real> out({times, rv.cols()});
  for (std::size_t i = 0; i < times; ++i) std::copy(rv.data.begin(), rv.data.end(), out.row(i).begin());
  return row.tape->record("tile_rows", std::move(out), {row}, [row](Tape<Real>& t, std::uint32_t self) {
    if (!t.requires_grad(row.id)) return;
    const auto& g = t.grad(self);
    auto& gr = t.grad(row.id);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gr.data[j] += g.at(i, j);
  });
}

template <typename Real>
Var<Real> embedding_lookup(Tape<Real>& tape, Parameter<Real>& table,
                           std::span<const std::int32_t> indices) {
  const auto& tv = table.value();
  const std::size_t dim = tv.cols();
  Tensor<Real> out({indices.size(), dim});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= tv.rows()) {
      throw Error("embedding_lookup: index " + std::to_string(idx) + " out of range for " +
                  table.name() + " (" + std::to_string(tv.rows()) + " rows)");
    }
    const auto src = tv.row(static_cast<std::size_t>(idx));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::int32_t> rows(indices.begin(), indices.end());
  Parameter<Real>* p = &table;
  return tape.record_source("embedding_lookup", std::move(out), table.trainable(),
                            [p, rows](Tape<Real>& t, std::uint32_t self) {
                              const auto& g = t.grad(self);
                              auto& pg = p->grad();
                              for (std::size_t i = 0; i < rows.size(); ++i) {
                                const auto r = static_cast<std::size_t>(rows[i]);
                                p->mark_row(r);
                                auto dst = pg.row(r);
                                auto src = g.row(i);
                                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                              }
                            });
}

template <typename Real>
Var<Real> affine(Var<Real> x, Var<Real> weight, Var<Real> bias) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  if (x.tape != weight.tape || x.tape != bias.tape || xv.cols() != wv.rows() || bv.rows() != 1 ||
      bv.cols() != wv.cols()) {
    shape_error("affine", to_string(xv.shape) + " * " + to_string(wv.shape) + " + " +
                              to_string(bv.shape));
  }
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  Tensor<Real> out({m, n});
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.data.begin(), bv.data.end(), out.row(i).begin());
  mm_nn(xv.data.data(), wv.data.data(), out.data.data(), m, k, n);
  return x.tape->record(
      "affine", std::move(out), {x, weight, bias},
      [x, weight, bias, m, k, n](Tape<Real>& t, std::uint32_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(x.id)) {
          mm_nt(g.data.data(), t.value(weight.id).data.data(), t.grad(x.id).data.data(), m, n, k);
        }
        if (t.requires_grad(weight.id)) {
          mm_tn(t.value(x.id).data.data(), g.data.data(), t.grad(weight.id).data.data(), k, m, n);
        }
        if (t.requires_grad(bias.id)) {
          auto& gb = t.grad(bias.id);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.at(i, j);
        }
      });
}

template <typename Real>
Var<Real> sliding_window_concat(Var<Real> x, std::size_t h) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), d = xv.cols(), width = 2 * h + 1;
  Tensor<Real> out({rows, width * d});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t o = 0; o < width; ++o) {
      const auto src = static_cast<std::ptrdiff_t>(i + o) - static_cast<std::ptrdiff_t>(h);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(rows)) continue;
      const auto r = xv.row(static_cast<std::size_t>(src));
      std::copy(r.begin(), r.end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(o * d));
    }
  }
  return x.tape->record("sliding_window_concat", std::move(out), {x},
                        [x, h, rows, d, width](Tape<Real>& t, std::uint32_t self) {
                          if (!t.requires_grad(x.id)) return;
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(x.id);
                          for (std::size_t i = 0; i < rows; ++i) {
                            for (std::size_t o = 0; o < width; ++o) {
                              const auto src = static_cast<std::ptrdiff_t>(i + o) -
                                               static_cast<std::ptrdiff_t>(h);
                              if (src < 0 || src >= static_cast<std::ptrdiff_t>(rows)) continue;
                              for (std::size_t c = 0; c < d; ++c) {
                                gx.at(static_cast<std::size_t>(src), c) += g.at(i, o * d + c);
                              }
                            }
                          }
                        });
}

template <typename Real>
Var<Real> sum(Var<Real> x) {
  const auto& xv = x.value();
  Tensor<Real> out({1, 1});
  for (auto v : xv.data) out.data[0] += v;
  return x.tape->record("sum", std::move(out), {x}, [x](Tape<Real>& t, std::uint32_t self) {
    if (!t.requires_grad(x.id)) return;
    const Real g = t.grad(self).data[0];
    auto& gx = t.grad(x.id);
    for (auto& v : gx.data) v += g;
  });
}

template <typename Real>
Var<Real> softmax_cross_entropy(Var<Real> scores, std::size_t target) {
  const auto& sv = scores.value();
  if (sv.rows() != 1 || target >= sv.cols()) {
    shape_error("softmax_cross_entropy", "target " + std::to_string(target) + " for scores " +
                                             to_string(sv.shape));
  }
  const Real mx = *std::max_element(sv.data.begin(), sv.data.end());
  Real total = 0;
  for (auto v : sv.data) total += std::exp(v - mx);
  const Real lse = mx + std::log(total);
  Tensor<Real> out({1, 1});
  out.data[0] = lse - sv.data[target];
  return scores.tape->record(
      "softmax_cross_entropy", std::move(out), {scores},
      [scores, target, lse](Tape<Real>& t, std::uint32_t self) {
        if (!t.requires_grad(scores.id)) return;
        const Real g = t.grad(self).data[0];
        const auto& sv = t.value(scores.id);
        auto& gs = t.grad(scores.id);
        for (std::size_t j = 0; j < sv.data.size(); ++j) {
          const Real p = std::exp(sv.data[j] - lse);
          gs.data[j] += g * (p - (j == target ? Real(1) : Real(0)));
        }
      });
}

template <typename Real>
GradCheckResult grad_check(const std::function<Var<Real>(Tape<Real>&)>& fn,
                           std::span<Parameter<Real>* const> params, Real eps,
                           std::size_t max_coords_per_param, std::uint64_t seed) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<Real> tape;
    tape.backward(fn(tape));
  }
  std::vector<std::vector<Real>> analytic;
  for (auto* p : params) analytic.push_back(p->grad().data);

  auto evaluate = [&fn]() {
    Tape<Real> tape;
    return static_cast<double>(fn(tape).item());
  };

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& values = params[k]->value().data;
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
    }
    for (auto c : coords) {
      const Real original = values[c];
      values[c] = original + eps;
      const double up = evaluate();
      values[c] = original - eps;
      const double down = evaluate();
      values[c] = original;
      const double numeric = (up - down) / (2.0 * static_cast<double>(eps));
      const double a = static_cast<double>(analytic[k][c]);
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8);
      ++result.coordinates;
      if (result.worst.empty() || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst = params[k]->name() + "[" + std::to_string(c) + "]";
      }
    }
  }
  return result;
}

template <typename Real>
Parameter<Real>& ParameterStore<Real>::add(std::string name, Shape shape, bool row_sparse) {
  if (find(name) != nullptr) throw Error("duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter<Real>>(std::move(name), shape, row_sparse));
  return *params_.back();
}

template <typename Real>
Parameter<Real>* ParameterStore<Real>::find(std::string_view name) {
  for (auto& p : params_)
    if (p->name() == name) return p.get();
  return nullptr;
}

template <typename Real>
const Parameter<Real>* ParameterStore<Real>::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name() == name) return p.get();
  return nullptr;
}

template <typename Real>
Parameter<Real>& ParameterStore<Real>::at(std::string_view name) {
  auto* p = find(name);
  if (p == nullptr) throw Error("unknown parameter " + std::string(name));
  return *p;
}

template <typename Real>
std::vector<Parameter<Real>*> ParameterStore<Real>::all() {
  std::vector<Parameter<Real>*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename Real>
std::vector<const Parameter<Real>*> ParameterStore<Real>::all() const {
  std::vector<const Parameter<Real>*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename Real>
std::size_t ParameterStore<Real>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->shape().size();
  return n;
}

template <typename Real>
void ParameterStore<Real>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename Real>
void init_uniform(Parameter<Real>& p, Real range, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(range),
                                              static_cast<double>(range));
  for (auto& v : p.value().data) v = static_cast<Real>(dist(rng));
}

template <typename Real>
void init_glorot(Parameter<Real>& p, std::mt19937_64& rng) {
  const auto s = p.shape();
  const double range = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
  init_uniform(p, static_cast<Real>(range), rng);
}

#define AWRS_INSTANTIATE(R)                                                                  \
  template struct Tensor<R>;                                                                 \
  template class Parameter<R>;                                                               \
  template struct Var<R>;                                                                    \
  template class Tape<R>;                                                                    \
  template class ParameterStore<R>;                                                          \
  template Var<R> matmul(Var<R>, Var<R>);                                                    \
  template Var<R> matmul_transposed(Var<R>, Var<R>);                                         \
  template Var<R> transpose(Var<R>);                                                         \
  template Var<R> add(Var<R>, Var<R>);                                                       \
  template Var<R> sub(Var<R>, Var<R>);                                                       \
  template Var<R> mul(Var<R>, Var<R>);                                                       \
  template Var<R> add_bias(Var<R>, Var<R>);                                                  \
  template Var<R> scale(Var<R>, R);                                                          \
  template Var<R> add_scalar(Var<R>, R);                                                     \
  template Var<R> one_minus(Var<R>);                                                         \
  template Var<R> sigmoid(Var<R>);                                                           \
  template Var<R> tanh(Var<R>);                                                              \
  template Var<R> relu(Var<R>);                                                              \
  template Var<R> exp(Var<R>);                                                               \
  template Var<R> sin(Var<R>);                                                               \
  template Var<R> softmax_rows(Var<R>, const Mask&);                                         \
  template Var<R> concat_cols(std::span<const Var<R>>);                                      \
  template Var<R> concat_cols(std::initializer_list<Var<R>>);                                \
  template Var<R> concat_rows(std::span<const Var<R>>);                                      \
  template Var<R> slice_cols(Var<R>, std::size_t, std::size_t);                              \
  template Var<R> slice_rows(Var<R>, std::size_t, std::size_t);                              \
  template Var<R> tile_rows(Var<R>, std::size_t);                                            \
  template Var<R> embedding_lookup(Tape<R>&, Parameter<R>&, std::span<const std::int32_t>);  \
  template Var<R> affine(Var<R>, Var<R>, Var<R>);                                            \
  template Var<R> sliding_window_concat(Var<R>, std::size_t);                                \
  template Var<R> sum(Var<R>);                                                               \
  template Var<R> softmax_cross_entropy(Var<R>, std::size_t);                                \
  template GradCheckResult grad_check(const std::function<Var<R>(Tape<R>&)>&,                \
                                      std::span<Parameter<R>* const>, R, std::size_t,        \
                                      std::uint64_t);                                        \
  template void init_uniform(Parameter<R>&, R, std::mt19937_64&);                            \
  template void init_glorot(Parameter<R>&, std::mt19937_64&);

AWRS_INSTANTIATE(float)
AWRS_INSTANTIATE(double)

#undef AWRS_INSTANTIATE

}  // namespace awrs::ad
