#pragma once

// Dense float64 tensors, a recorded reverse-mode tape, and the Adam optimizer.
//
// Every op takes `Var` handles that live on a `Tape`. Values are computed
// eagerly; when the tape records, each op also pushes a backward closure.
// `Tape::backward` walks nodes in reverse creation order, which is a valid
// topological order because inputs always precede their consumers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace capulse {

/// Raised for any violated shape or domain precondition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace capulse

namespace capulse::numeric {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Contiguous row-major float64 buffer with a shape. Rank-2 views treat the
/// first axis as rows and fold every remaining axis into columns.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw Error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                  shape_str(shape_));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.empty() ? 1 : data_.size() / std::max<std::size_t>(shape_[0], 1); }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  Tensor reshaped(Shape s) const {
    if (shape_size(s) != size())
      throw Error("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// A named trainable tensor with its gradient and Adam moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  bool has_grad = false;
};

/// Insertion-ordered collection of parameters plus the optimizer step count.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad = Tensor(init.shape());
    p->m = Tensor(init.shape());
    p->v = Tensor(init.shape());
    p->value = std::move(init);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return *params_[it->second];
  }
  const Parameter& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return *params_[it->second];
  }

  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  /// Deep copy of values, gradients and optimizer state.
  ParamStore clone() const {
    ParamStore out;
    for (const auto& p : params_) {
      auto& q = out.add(p->name, p->value);
      q.grad = p->grad;
      q.m = p->m;
      q.v = p->v;
      q.has_grad = p->has_grad;
    }
    out.step_ = step_;
    return out;
  }

  long step() const { return step_; }
  void set_step(long s) { step_ = s; }

  void zero_grad() {
    for (auto& p : params_) {
      std::fill(p->grad.raw().begin(), p->grad.raw().end(), 0.0);
      p->has_grad = false;
    }
  }

  /// Bias-corrected Adam. Every parameter must have a populated gradient;
  /// gradients are cleared afterwards.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    for (auto& p : params_)
      if (!p->has_grad) throw Error("adam_step: parameter '" + p->name + "' has no gradient");
    ++step_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& p : params_) {
      auto& w = p->value.raw();
      auto& g = p->grad.raw();
      auto& m = p->m.raw();
      auto& v = p->v.raw();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        w[i] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
    zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
  long step_ = 0;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const {
    if (value().size() != 1) throw Error("item() on non-scalar " + shape_str(shape()));
    return value()[0];
  }
};

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor t) { return push(std::move(t), false, {}); }

  /// Bind a parameter; its gradient accumulates into `p.grad` on backward.
  Var param(Parameter& p) {
    Var v = push(p.value, record_, {});
    nodes_[v.id].param = &p;
    return v;
  }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }

  /// Gradient buffer of a node after backward (zeros if none flowed).
  Tensor grad(Var v) const {
    const auto& n = nodes_[v.id];
    if (n.grad.empty()) return Tensor(n.value.shape());
    return Tensor(n.value.shape(), n.grad);
  }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Create a node. `back` receives the output gradient and the tape.
  template <typename Back>
  Var make(Tensor value, std::initializer_list<Var> inputs, Back&& back) {
    bool ng = false;
    if (record_)
      for (const auto& in : inputs) ng = ng || nodes_[in.id].needs_grad;
    std::function<void(Tape&, std::size_t)> fn;
    if (ng) fn = std::forward<Back>(back);
    return push(std::move(value), ng, std::move(fn));
  }

  template <typename Back>
  Var make(Tensor value, const std::vector<Var>& inputs, Back&& back) {
    bool ng = false;
    if (record_)
      for (const auto& in : inputs) ng = ng || nodes_[in.id].needs_grad;
    std::function<void(Tape&, std::size_t)> fn;
    if (ng) fn = std::forward<Back>(back);
    return push(std::move(value), ng, std::move(fn));
  }

  /// Accumulate `g` (same size as node) into the gradient of `v`.
  void accumulate(Var v, std::span<const double> g) {
    auto& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }
  std::vector<double>* grad_buffer(Var v) {
    auto& n = nodes_[v.id];
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return &n.grad;
  }
  std::span<const double> out_grad(std::size_t id) const { return nodes_[id].grad; }

  /// Reverse sweep from a scalar root; parameter gradients are added into
  /// their `Parameter::grad` buffers.
  void backward(Var root) {
    if (!record_) throw Error("backward on a non-recording tape");
    if (value(root).size() != 1) throw Error("backward root must be scalar, got " + shape_str(root.shape()));
    if (!nodes_[root.id].needs_grad) {
      mark_params();
      return;
    }
    nodes_[root.id].grad.assign(1, 1.0);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.back || n.grad.empty()) continue;
      n.back(*this, i);
    }
    mark_params();
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Tape&, std::size_t)> back;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Tensor t, bool ng, std::function<void(Tape&, std::size_t)> back) {
    nodes_.push_back(Node{std::move(t), {}, std::move(back), nullptr, ng});
    return Var{this, nodes_.size() - 1};
  }

  void mark_params() {
    for (auto& n : nodes_) {
      if (!n.param) continue;
      n.param->has_grad = true;
      if (n.grad.empty()) continue;
      auto& g = n.param->grad.raw();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }

  bool record_;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Ops

namespace detail {

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void require_2d(const Var& a, const char* op) {
  if (a.shape().size() != 2) throw Error(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
}

template <typename F>
Var unary(Var a, F&& f, std::function<double(double x, double y)> dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return a.tape->make(std::move(out), {a}, [a, dfdx](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    auto* ga = t.grad_buffer(a);
    if (!ga) return;
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(Var{&t, self});
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw Error("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  return a.tape->make(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (auto* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          (*ga)[i * k + p] += s;
        }
    }
    if (auto* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += x * g[i * n + j];
        }
    }
  });
}

inline Var add(Var a, Var b) {
  detail::require_same(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->make(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->make(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    t.accumulate(a, g);
    if (auto* gb = t.grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  detail::require_same(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->make(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (auto* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (auto* gb = t.grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& x : out.raw()) x *= c;
  return a.tape->make(std::move(out), {a}, [a, c](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    if (auto* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += c * g[i];
  });
}

inline Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (auto& x : out.raw()) x += c;
  return a.tape->make(std::move(out), {a}, [a](Tape& t, std::size_t self) { t.accumulate(a, t.out_grad(self)); });
}

/// Multiply every element of `a` by the 1x1 tensor `s`.
inline Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) throw Error("scale_by: scale must be scalar, got " + shape_str(s.shape()));
  const double c = s.value()[0];
  Tensor out = a.value();
  for (auto& x : out.raw()) x *= c;
  return a.tape->make(std::move(out), {a, s}, [a, s](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    const double c = t.value(s)[0];
    if (auto* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += c * g[i];
    if (auto* gs = t.grad_buffer(s)) {
      const Tensor& av = t.value(a);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      (*gs)[0] += acc;
    }
  });
}

/// a[m x n] + bias[1 x n] broadcast over rows.
inline Var add_row(Var a, Var bias) {
  detail::require_2d(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.value().size() != n)
    throw Error("add_row: bias " + shape_str(bias.shape()) + " does not match " + shape_str(a.shape()));
  Tensor out = a.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return a.tape->make(std::move(out), {a, bias}, [a, bias, m, n](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    t.accumulate(a, g);
    if (auto* gb = t.grad_buffer(bias))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
  });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sqrt(Var a) {
  return detail::unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var square(Var a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var reciprocal(Var a) {
  return detail::unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

/// Row-wise softmax with max-shift.
inline Var softmax_rows(Var a) {
  detail::require_2d(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = av[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[i * n + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += out[i * n + j] = std::exp(av[i * n + j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= s;
  }
  return a.tape->make(std::move(out), {a}, [a, m, n](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    auto* ga = t.grad_buffer(a);
    if (!ga) return;
    const Tensor& y = t.value(Var{&t, self});
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

inline Var transpose(Var a) {
  detail::require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return a.tape->make(std::move(out), {a}, [a, m, n](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    if (auto* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j * m + i];
  });
}

inline Var reshape(Var a, Shape s) {
  Tensor out = a.value().reshaped(std::move(s));
  return a.tape->make(std::move(out), {a}, [a](Tape& t, std::size_t self) { t.accumulate(a, t.out_grad(self)); });
}

/// Concatenate rank-2 tensors along columns (equal row counts).
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_cols");
    if (p.rows() != m)
      throw Error("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    n += p.cols();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * n + off + j] = pv[i * c + j];
    off += c;
  }
  return parts[0].tape->make(std::move(out), parts, [parts, m, n](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t c = t.value(p).cols();
      if (auto* gp = t.grad_buffer(p))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gp)[i * c + j] += g[i * n + off + j];
      off += c;
    }
  });
}

/// Stack rank-2 tensors along rows (equal column counts).
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n)
      throw Error("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    m += p.rows();
  }
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& p : parts) data.insert(data.end(), p.value().raw().begin(), p.value().raw().end());
  return parts[0].tape->make(Tensor({m, n}, std::move(data)), parts, [parts](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t sz = t.value(p).size();
      t.accumulate(p, g.subspan(off, sz));
      off += sz;
    }
  });
}

/// Output row i is input row idx[i], or zeros when idx[i] < 0.
inline Var gather_rows(Var a, std::vector<long> idx) {
  detail::require_2d(a, "gather_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({idx.size(), n});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    if (static_cast<std::size_t>(idx[i]) >= m) throw Error("gather_rows: index out of range");
    std::copy_n(&av[static_cast<std::size_t>(idx[i]) * n], n, &out[i * n]);
  }
  return a.tape->make(std::move(out), {a}, [a, n, idx = std::move(idx)](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    auto* ga = t.grad_buffer(a);
    if (!ga) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0) continue;
      const std::size_t r = static_cast<std::size_t>(idx[i]);
      for (std::size_t j = 0; j < n; ++j) (*ga)[r * n + j] += g[i * n + j];
    }
  });
}

/// Single element as a 1x1 tensor.
inline Var element(Var a, std::size_t i) {
  if (i >= a.value().size()) throw Error("element: index out of range");
  return a.tape->make(Tensor::scalar(a.value()[i]), {a}, [a, i](Tape& t, std::size_t self) {
    if (auto* ga = t.grad_buffer(a)) (*ga)[i] += t.out_grad(self)[0];
  });
}

inline Var sum(Var a) {
  const auto& av = a.value().raw();
  double s = 0.0;
  for (double x : av) s += x;
  return a.tape->make(Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    if (auto* ga = t.grad_buffer(a))
      for (auto& x : *ga) x += g;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Column means over rows: [m x n] -> [1 x n].
inline Var mean_rows(Var a) {
  detail::require_2d(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  for (auto& x : out.raw()) x /= static_cast<double>(m);
  return a.tape->make(std::move(out), {a}, [a, m, n](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    auto* ga = t.grad_buffer(a);
    if (!ga) return;
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[j] * inv;
  });
}

/// Row sums: [m x n] -> [m x 1].
inline Var sum_cols(Var a) {
  detail::require_2d(a, "sum_cols");
  const std::size_t m = a.rows(), n = a.cols();
  const Tensor& av = a.value();
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  return a.tape->make(std::move(out), {a}, [a, m, n](Tape& t, std::size_t self) {
    auto g = t.out_grad(self);
    if (auto* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)[i * n + j] += g[i];
  });
}

/// Frobenius inner product of two same-shape tensors, as 1x1.
inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

/// Mean over channels of |DFT_f| for each requested bin f of every column
/// of `a` [T x C]: output [1 x bins.size()]. Gradient is zero where the
/// amplitude vanishes.
inline Var dft_amplitude(Var a, std::vector<std::size_t> bins) {
  detail::require_2d(a, "dft_amplitude");
  const std::size_t T = a.rows(), C = a.cols();
  const Tensor& av = a.value();
  const std::size_t k = bins.size();
  const double two_pi = 2.0 * std::acos(-1.0);
  // Per (bin, channel) real and imaginary parts, kept for backward.
  std::vector<double> re(k * C, 0.0), im(k * C, 0.0);
  Tensor out({1, k});
  for (std::size_t b = 0; b < k; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const double th = two_pi * static_cast<double>((bins[b] * t) % T) / static_cast<double>(T);
      const double c = std::cos(th), s = std::sin(th);
      for (std::size_t ch = 0; ch < C; ++ch) {
        re[b * C + ch] += av[t * C + ch] * c;
        im[b * C + ch] -= av[t * C + ch] * s;
      }
    }
    double acc = 0.0;
    for (std::size_t ch = 0; ch < C; ++ch) acc += std::hypot(re[b * C + ch], im[b * C + ch]);
    out[b] = acc / static_cast<double>(C);
  }
  return a.tape->make(std::move(out), {a},
                      [a, T, C, k, two_pi, bins = std::move(bins), re = std::move(re), im = std::move(im)](
                          Tape& t, std::size_t self) {
                        auto g = t.out_grad(self);
                        auto* ga = t.grad_buffer(a);
                        if (!ga) return;
                        for (std::size_t b = 0; b < k; ++b) {
                          const double gb = g[b] / static_cast<double>(C);
                          for (std::size_t ts = 0; ts < T; ++ts) {
                            const double th =
                                two_pi * static_cast<double>((bins[b] * ts) % T) / static_cast<double>(T);
                            const double c = std::cos(th), s = std::sin(th);
                            for (std::size_t ch = 0; ch < C; ++ch) {
                              const double r = re[b * C + ch], i = im[b * C + ch];
                              const double mag = std::hypot(r, i);
                              if (mag == 0.0) continue;
                              (*ga)[ts * C + ch] += gb * (r * c - i * s) / mag;
                            }
                          }
                        }
                      });
}

// ---------------------------------------------------------------------------
// Layers

using Rng = std::mt19937_64;

/// Register `<prefix>.w` [in x out] (Xavier-uniform times `gain`, or zeros)
/// and a zero `<prefix>.b` [1 x out].
inline void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                       double gain = 1.0, bool zero = false) {
  Tensor w({in, out});
  if (!zero) {
    const double a = gain * std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& x : w.raw()) x = u(rng);
  }
  store.add(prefix + ".w", std::move(w));
  store.add(prefix + ".b", Tensor({1, out}));
}

/// Dense layer `x W + b` over rows, with parameters `<prefix>.w` [in x out]
/// and `<prefix>.b` [1 x out].
struct Linear {
  std::string prefix;

  Var operator()(Tape& tape, ParamStore& store, Var x) const {
    Var w = tape.param(store.get(prefix + ".w"));
    Var b = tape.param(store.get(prefix + ".b"));
    return add_row(matmul(x, w), b);
  }
};

}  // namespace capulse::numeric
