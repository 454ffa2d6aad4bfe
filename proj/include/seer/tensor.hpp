#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace seer {

using Shape = std::vector<std::int64_t>;

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Trailing-dimension (numpy-style, right-aligned) broadcast of two shapes.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw TensorError("incompatible shapes for broadcast: " + shape_str(a) +
                        " vs " + shape_str(b));
    out[nd - 1 - i] = std::max(da, db);
  }
  return out;
}

// Maps every linear index of `out` to the linear index of the (possibly
// broadcast) input with shape `in`. Sizes here are small; the table keeps the
// op kernels branch-free.
inline std::vector<std::int64_t> broadcast_index_map(const Shape& out,
                                                     const Shape& in) {
  const std::int64_t n = shape_numel(out);
  std::vector<std::int64_t> map(static_cast<std::size_t>(n));
  const auto out_strides = row_major_strides(out);
  const auto in_strides = row_major_strides(in);
  const std::size_t off = out.size() - in.size();
  for (std::int64_t idx = 0; idx < n; ++idx) {
    std::int64_t rem = idx, src = 0;
    for (std::size_t d = 0; d < out.size(); ++d) {
      const std::int64_t coord = rem / out_strides[d];
      rem %= out_strides[d];
      if (d >= off) {
        const std::size_t id = d - off;
        if (in[id] != 1) src += coord * in_strides[id];
      }
    }
    map[static_cast<std::size_t>(idx)] = src;
  }
  return map;
}

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // accumulates this->grad into parents

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
      throw TensorError("shape " + shape_str(shape) + " does not match " +
                        std::to_string(values.size()) + " values");
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<double>{v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::int64_t numel() const { return node_->numel(); }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& mutable_values() { return node_->values; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  double item() const {
    if (numel() != 1) throw TensorError("item() on non-scalar tensor");
    return node_->values[0];
  }
  double at(std::initializer_list<std::int64_t> idx) const {
    const auto st = row_major_strides(node_->shape);
    std::int64_t off = 0;
    std::size_t d = 0;
    for (auto i : idx) off += i * st[d++];
    return node_->values[static_cast<std::size_t>(off)];
  }

  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }
  void accumulate_grad(const std::vector<double>& g) {
    node_->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
  }

  bool all_finite() const {
    for (double v : node_->values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  NodePtr node() const { return node_; }
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

 private:
  NodePtr node_;
};

namespace detail {

inline NodePtr make_result(Shape shape, std::vector<double> values,
                           std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->parents = std::move(parents);
  n->requires_grad = false;
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with trailing-dimension broadcasting.
// ---------------------------------------------------------------------------

enum class BinaryKind { Add, Sub, Mul, Div };

inline Tensor binary_op(BinaryKind kind, const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto map_a = broadcast_index_map(out_shape, a.shape());
  const auto map_b = broadcast_index_map(out_shape, b.shape());
  const std::int64_t n = shape_numel(out_shape);
  std::vector<double> out(static_cast<std::size_t>(n));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = av[map_a[i]], y = bv[map_b[i]];
    switch (kind) {
      case BinaryKind::Add: out[i] = x + y; break;
      case BinaryKind::Sub: out[i] = x - y; break;
      case BinaryKind::Mul: out[i] = x * y; break;
      case BinaryKind::Div: out[i] = x / y; break;
    }
  }
  auto node = detail::make_result(out_shape, std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    node->backprop = [kind, map_a, map_b, an, bn](Node& self) {
      const auto& av = an->values;
      const auto& bv = bn->values;
      const bool need_a = an->requires_grad, need_b = bn->requires_grad;
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      for (std::size_t i = 0; i < self.values.size(); ++i) {
        const double g = self.grad[i];
        const double x = av[map_a[i]], y = bv[map_b[i]];
        switch (kind) {
          case BinaryKind::Add:
            if (need_a) an->grad[map_a[i]] += g;
            if (need_b) bn->grad[map_b[i]] += g;
            break;
          case BinaryKind::Sub:
            if (need_a) an->grad[map_a[i]] += g;
            if (need_b) bn->grad[map_b[i]] -= g;
            break;
          case BinaryKind::Mul:
            if (need_a) an->grad[map_a[i]] += g * y;
            if (need_b) bn->grad[map_b[i]] += g * x;
            break;
          case BinaryKind::Div:
            if (need_a) an->grad[map_a[i]] += g / y;
            if (need_b) bn->grad[map_b[i]] += -g * x / (y * y);
            break;
        }
      }
    };
  }
  return Tensor(node);
}

inline Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Div, a, b); }

inline Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor sub(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor mul(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor div(const Tensor& a, double s) { return div(a, Tensor::scalar(s)); }
inline Tensor div(double s, const Tensor& a) { return div(Tensor::scalar(s), a); }

// ---------------------------------------------------------------------------
// Elementwise unary ops.
// ---------------------------------------------------------------------------

// f(x) and df(x, fx).
inline Tensor unary_op(const Tensor& a, double (*f)(double),
                       double (*df)(double, double)) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto node = detail::make_result(a.shape(), std::move(out), {a.node()});
  if (node->requires_grad) {
    NodePtr an = a.node();
    node->backprop = [an, df](Node& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.values.size(); ++i)
        an->grad[i] += self.grad[i] * df(an->values[i], self.values[i]);
    };
  }
  return Tensor(node);
}

inline Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      +[](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
      },
      +[](double, double fx) { return fx * (1.0 - fx); });
}

inline Tensor exp_t(const Tensor& a) {
  return unary_op(a, +[](double x) { return std::exp(x); },
                  +[](double, double fx) { return fx; });
}

inline Tensor relu(const Tensor& a) {
  return unary_op(a, +[](double x) { return x > 0 ? x : 0.0; },
                  +[](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor gelu(const Tensor& a) {
  return unary_op(
      a,
      +[](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); },
      +[](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return cdf + x * pdf;
      });
}

// Subgradient sign(0) = 0.
inline Tensor abs_t(const Tensor& a) {
  return unary_op(a, +[](double x) { return std::fabs(x); },
                  +[](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Tensor sqrt_t(const Tensor& a) {
  return unary_op(a, +[](double x) { return std::sqrt(x); },
                  +[](double, double fx) { return 0.5 / fx; });
}

inline Tensor neg(const Tensor& a) { return mul(a, -1.0); }

// Gradient passes where the value is inside [lo, hi], zero where clamped.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i)
    out[i] = std::min(hi, std::max(lo, av[i]));
  auto node = detail::make_result(a.shape(), std::move(out), {a.node()});
  if (node->requires_grad) {
    NodePtr an = a.node();
    node->backprop = [an, lo, hi](Node& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.values.size(); ++i) {
        const double x = an->values[i];
        if (x >= lo && x <= hi) an->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------------------
// Matmul: a [..., m, k] x b [..., k, n], leading batch dims equal or size-1.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2)
    throw TensorError("matmul needs >=2-d tensors, got " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
  const std::int64_t m = a.shape()[a.ndim() - 2];
  const std::int64_t k = a.shape()[a.ndim() - 1];
  const std::int64_t kb = b.shape()[b.ndim() - 2];
  const std::int64_t n = b.shape()[b.ndim() - 1];
  if (k != kb)
    throw TensorError("matmul inner-dimension mismatch: " + shape_str(a.shape()) +
                      " x " + shape_str(b.shape()));
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shape(batch_a, batch_b);
  const auto map_a = broadcast_index_map(batch, batch_a);
  const auto map_b = broadcast_index_map(batch, batch_b);
  const std::int64_t nbatch = shape_numel(batch);

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(static_cast<std::size_t>(nbatch * m * n), 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::int64_t bi = 0; bi < nbatch; ++bi) {
    const double* A = av.data() + map_a[bi] * m * k;
    const double* B = bv.data() + map_b[bi] * k * n;
    double* C = out.data() + bi * m * n;
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t p = 0; p < k; ++p) {
        const double x = A[i * k + p];
        if (x == 0.0) continue;
        const double* Brow = B + p * n;
        double* Crow = C + i * n;
        for (std::int64_t j = 0; j < n; ++j) Crow[j] += x * Brow[j];
      }
  }
  auto node = detail::make_result(std::move(out_shape), std::move(out),
                                  {a.node(), b.node()});
  if (node->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    node->backprop = [an, bn, map_a, map_b, nbatch, m, k, n](Node& self) {
      const bool need_a = an->requires_grad, need_b = bn->requires_grad;
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      for (std::int64_t bi = 0; bi < nbatch; ++bi) {
        const double* G = self.grad.data() + bi * m * n;
        const double* A = an->values.data() + map_a[bi] * m * k;
        const double* B = bn->values.data() + map_b[bi] * k * n;
        if (need_a) {
          double* dA = an->grad.data() + map_a[bi] * m * k;
          // dA = G * B^T
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::int64_t j = 0; j < n; ++j)
                acc += G[i * n + j] * B[p * n + j];
              dA[i * k + p] += acc;
            }
        }
        if (need_b) {
          double* dB = bn->grad.data() + map_b[bi] * k * n;
          // dB = A^T * G
          for (std::int64_t p = 0; p < k; ++p)
            for (std::int64_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (std::int64_t i = 0; i < m; ++i)
                acc += A[i * k + p] * G[i * n + j];
              dB[p * n + j] += acc;
            }
        }
      }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------------------
// Softmax along an axis, -inf entries map to exactly 0.
// ---------------------------------------------------------------------------

inline std::size_t normalize_axis(int axis, std::size_t ndim) {
  int a = axis < 0 ? axis + static_cast<int>(ndim) : axis;
  if (a < 0 || a >= static_cast<int>(ndim))
    throw TensorError("axis " + std::to_string(axis) + " out of range for " +
                      std::to_string(ndim) + "-d tensor");
  return static_cast<std::size_t>(a);
}

inline Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const Shape& s = x.shape();
  const std::int64_t axis_len = s[ax];
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * axis_len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::int64_t j = 0; j < axis_len; ++j)
        mx = std::max(mx, xv[base + j * inner]);
      if (!std::isfinite(mx))
        throw TensorError("softmax: all entries are -inf along axis " +
                          std::to_string(axis));
      double sum = 0.0;
      for (std::int64_t j = 0; j < axis_len; ++j) {
        const double v = xv[base + j * inner];
        const double e = std::isinf(v) && v < 0 ? 0.0 : std::exp(v - mx);
        out[base + j * inner] = e;
        sum += e;
      }
      for (std::int64_t j = 0; j < axis_len; ++j) out[base + j * inner] /= sum;
    }
  auto node = detail::make_result(s, std::move(out), {x.node()});
  if (node->requires_grad) {
    NodePtr xn = x.node();
    node->backprop = [xn, outer, inner, axis_len](Node& self) {
      xn->ensure_grad();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
          const std::int64_t base = o * axis_len * inner + in;
          double dot = 0.0;
          for (std::int64_t j = 0; j < axis_len; ++j)
            dot += self.grad[base + j * inner] * self.values[base + j * inner];
          for (std::int64_t j = 0; j < axis_len; ++j) {
            const double y = self.values[base + j * inner];
            xn->grad[base + j * inner] +=
                y * (self.grad[base + j * inner] - dot);
          }
        }
    };
  }
  return Tensor(node);
}

// ---------------------------------------------------------------------------
// Reductions and shape ops.
// ---------------------------------------------------------------------------

inline Tensor reduce_sum(const Tensor& x, int axis, bool keepdim = false) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const Shape& s = x.shape();
  if (s[ax] == 0) throw TensorError("reduce over empty axis");
  const std::int64_t axis_len = s[ax];
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == ax) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(s[i]);
    }
  }
  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(outer * inner), 0.0);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < axis_len; ++j)
      for (std::int64_t in = 0; in < inner; ++in)
        out[o * inner + in] += xv[(o * axis_len + j) * inner + in];
  auto node = detail::make_result(std::move(out_shape), std::move(out), {x.node()});
  if (node->requires_grad) {
    NodePtr xn = x.node();
    node->backprop = [xn, outer, inner, axis_len](Node& self) {
      xn->ensure_grad();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < axis_len; ++j)
          for (std::int64_t in = 0; in < inner; ++in)
            xn->grad[(o * axis_len + j) * inner + in] += self.grad[o * inner + in];
    };
  }
  return Tensor(node);
}

inline Tensor reduce_mean(const Tensor& x, int axis, bool keepdim = false) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  return div(reduce_sum(x, axis, keepdim), static_cast<double>(x.shape()[ax]));
}

inline Tensor sum_all(const Tensor& x) {
  Tensor t = x;
  while (t.ndim() > 0) t = reduce_sum(t, -1);
  return t;
}

inline Tensor mean_all(const Tensor& x) {
  return div(sum_all(x), static_cast<double>(x.numel()));
}

// Biased (1/n) variance along an axis, built from differentiable primitives.
inline Tensor variance(const Tensor& x, int axis, bool keepdim = false) {
  Tensor mu = reduce_mean(x, axis, /*keepdim=*/true);
  Tensor d = sub(x, mu);
  return reduce_mean(mul(d, d), axis, keepdim);
}

// Gradient routes to the first maximal element along the axis.
inline Tensor reduce_max(const Tensor& x, int axis, bool keepdim = false) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const Shape& s = x.shape();
  if (s[ax] == 0) throw TensorError("reduce over empty axis");
  const std::int64_t axis_len = s[ax];
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == ax) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(s[i]);
    }
  }
  const auto& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(outer * inner));
  std::vector<std::int64_t> arg(static_cast<std::size_t>(outer * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      double best = -std::numeric_limits<double>::infinity();
      std::int64_t bj = 0;
      for (std::int64_t j = 0; j < axis_len; ++j) {
        const double v = xv[(o * axis_len + j) * inner + in];
        if (v > best) {
          best = v;
          bj = j;
        }
      }
      out[o * inner + in] = best;
      arg[o * inner + in] = bj;
    }
  auto node = detail::make_result(std::move(out_shape), std::move(out), {x.node()});
  if (node->requires_grad) {
    NodePtr xn = x.node();
    node->backprop = [xn, arg, inner, axis_len](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.values.size(); ++i) {
        const std::int64_t o = static_cast<std::int64_t>(i) / inner;
        const std::int64_t in = static_cast<std::int64_t>(i) % inner;
        xn->grad[(o * axis_len + arg[i]) * inner + in] += self.grad[i];
      }
    };
  }
  return Tensor(node);
}

inline Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw TensorError("reshape " + shape_str(x.shape()) + " -> " +
                      shape_str(new_shape) + " changes element count");
  auto node = detail::make_result(std::move(new_shape),
                                  std::vector<double>(x.values()), {x.node()});
  if (node->requires_grad) {
    NodePtr xn = x.node();
    node->backprop = [xn](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.values.size(); ++i)
        xn->grad[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

inline Tensor flatten(const Tensor& x) { return reshape(x, Shape{x.numel()}); }

inline Tensor transpose(const Tensor& x, int axis1, int axis2) {
  const std::size_t a1 = normalize_axis(axis1, x.ndim());
  const std::size_t a2 = normalize_axis(axis2, x.ndim());
  Shape out_shape = x.shape();
  std::swap(out_shape[a1], out_shape[a2]);
  const auto in_strides = row_major_strides(x.shape());
  const auto out_strides = row_major_strides(out_shape);
  const std::int64_t n = x.numel();
  // out index -> in index permutation table
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  for (std::int64_t idx = 0; idx < n; ++idx) {
    std::int64_t rem = idx, src = 0;
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      const std::int64_t coord = rem / out_strides[d];
      rem %= out_strides[d];
      std::size_t sd = d == a1 ? a2 : (d == a2 ? a1 : d);
      src += coord * in_strides[sd];
    }
    perm[static_cast<std::size_t>(idx)] = src;
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  const auto& xv = x.values();
  for (std::int64_t i = 0; i < n; ++i) out[i] = xv[perm[i]];
  auto node = detail::make_result(std::move(out_shape), std::move(out), {x.node()});
  if (node->requires_grad) {
    NodePtr xn = x.node();
    node->backprop = [xn, perm](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.values.size(); ++i)
        xn->grad[perm[i]] += self.grad[i];
    };
  }
  return Tensor(node);
}

inline Tensor slice(const Tensor& x, int axis, std::int64_t start,
                    std::int64_t len) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const Shape& s = x.shape();
  if (start < 0 || start + len > s[ax])
    throw TensorError("slice [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") out of range for axis of size " +
                      std::to_string(s[ax]));
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[ax] = len;
  const std::int64_t axis_len = s[ax];
  std::vector<double> out(static_cast<std::size_t>(outer * len * inner));
  const auto& xv = x.values();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < len; ++j)
      for (std::int64_t in = 0; in < inner; ++in)
        out[(o * len + j) * inner + in] =
            xv[(o * axis_len + start + j) * inner + in];
  auto node = detail::make_result(std::move(out_shape), std::move(out), {x.node()});
  if (node->requires_grad) {
    NodePtr xn = x.node();
    node->backprop = [xn, outer, inner, axis_len, start, len](Node& self) {
      xn->ensure_grad();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < len; ++j)
          for (std::int64_t in = 0; in < inner; ++in)
            xn->grad[(o * axis_len + start + j) * inner + in] +=
                self.grad[(o * len + j) * inner + in];
    };
  }
  return Tensor(node);
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw TensorError("concat of empty list");
  const std::size_t ax = normalize_axis(axis, parts[0].ndim());
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != parts[0].ndim())
      throw TensorError("concat rank mismatch");
    for (std::size_t i = 0; i < out_shape.size(); ++i)
      if (i != ax && p.shape()[i] != out_shape[i])
        throw TensorError("concat shape mismatch: " + shape_str(p.shape()) +
                          " vs " + shape_str(out_shape));
    total += p.shape()[ax];
  }
  out_shape[ax] = total;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= out_shape[i];
  for (std::size_t i = ax + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
  std::vector<double> out(static_cast<std::size_t>(outer * total * inner));
  std::int64_t offset = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::int64_t plen = p.shape()[ax];
    const auto& pv = p.values();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t j = 0; j < plen; ++j)
        for (std::int64_t in = 0; in < inner; ++in)
          out[(o * total + offset + j) * inner + in] =
              pv[(o * plen + j) * inner + in];
    offset += plen;
  }
  std::vector<NodePtr> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  auto node = detail::make_result(std::move(out_shape), std::move(out),
                                  std::move(parents));
  if (node->requires_grad) {
    std::vector<std::int64_t> lens;
    for (const auto& p : parts) lens.push_back(p.shape()[ax]);
    node->backprop = [outer, inner, total, lens, offsets](Node& self) {
      for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
        auto& pn = self.parents[pi];
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        const std::int64_t plen = lens[pi], off = offsets[pi];
        for (std::int64_t o = 0; o < outer; ++o)
          for (std::int64_t j = 0; j < plen; ++j)
            for (std::int64_t in = 0; in < inner; ++in)
              pn->grad[(o * plen + j) * inner + in] +=
                  self.grad[(o * total + off + j) * inner + in];
      }
    };
  }
  return Tensor(node);
}

// Copies values and severs the gradient path.
inline Tensor detach(const Tensor& x) {
  return Tensor(x.shape(), std::vector<double>(x.values()), false);
}

// ---------------------------------------------------------------------------
// Backward pass.
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw TensorError("backward requires a scalar loss, got shape " +
                      shape_str(loss.shape()));
  if (!loss.node()->requires_grad) return;  // constant graph, nothing to do
  // Topological order via iterative DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace seer
