#pragma once

// Minimal dense-tensor reverse-mode differentiation engine. Tensors are
// row-major, templated on scalar; graphs are per-step and discarded after
// backward. Reductions and matmul inner loops accumulate in double.

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sic/common.hpp"

namespace sic::ad {

using Shape = std::vector<int>;

inline std::int64_t numel_of(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

struct ShapeError : DomainError {
  ShapeError(const std::string& op, const Shape& a, const Shape& b)
      : DomainError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b)) {}
  ShapeError(const std::string& op, const std::string& msg) : DomainError(op + ": " + msg) {}
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Tensor zeros(const Shape& s, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->shape = s;
    n->data.assign(static_cast<std::size_t>(numel_of(s)), T(0));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor full(const Shape& s, T v) {
    Tensor t = zeros(s);
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
  }
  static Tensor from_values(const Shape& s, std::vector<T> v, bool requires_grad = false) {
    if (static_cast<std::int64_t>(v.size()) != numel_of(s))
      throw ShapeError("from_values", "data length does not match shape " + shape_str(s));
    auto n = std::make_shared<Node<T>>();
    n->shape = s;
    n->data = std::move(v);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  std::int64_t numel() const { return n_->numel(); }
  std::vector<T>& data() { return n_->data; }
  const std::vector<T>& data() const { return n_->data; }
  std::vector<T>& grad() { return n_->grad; }
  const std::vector<T>& grad() const { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  std::shared_ptr<Node<T>>& node() { return n_; }
  const std::shared_ptr<Node<T>>& node() const { return n_; }

  void zero_grad() { n_->grad.assign(n_->data.size(), T(0)); }

  T scalar() const {
    if (numel() != 1) throw ShapeError("scalar", "tensor is not a scalar: " + shape_str(shape()));
    return n_->data[0];
  }

 private:
  std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
Tensor<T> make_op(const Shape& shape, std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = shape;
  n->data.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(n);
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<const RowMat<T>> mat_view(const std::vector<T>& v, int rows, int cols, int offset = 0) {
  return Eigen::Map<const RowMat<T>>(v.data() + offset, rows, cols);
}
template <class T>
Eigen::Map<RowMat<T>> mat_view(std::vector<T>& v, int rows, int cols, int offset = 0) {
  return Eigen::Map<RowMat<T>>(v.data() + offset, rows, cols);
}

// C += or = A * B with double accumulation regardless of T
template <class T>
void gemm_acc(const std::vector<T>& a, const std::vector<T>& b, std::vector<T>& c, int n, int k,
              int m, int oa, int ob, int oc, bool trans_a, bool trans_b, bool accumulate) {
  RowMatD A;
  if (trans_a)
    A = mat_view(a, k, n, oa).template cast<double>().transpose();
  else
    A = mat_view(a, n, k, oa).template cast<double>();
  RowMatD B;
  if (trans_b)
    B = mat_view(b, m, k, ob).template cast<double>().transpose();
  else
    B = mat_view(b, k, m, ob).template cast<double>();
  RowMatD C = A * B;
  auto Cv = mat_view(c, n, m, oc);
  if (accumulate)
    Cv = (Cv.template cast<double>() + C).template cast<T>();
  else
    Cv = C.template cast<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// forward ops

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul", a.shape(), b.shape());
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>({n, m}, {an, bn}, [an, bn, n, k, m](Node<T>& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      detail::gemm_acc(o.grad, bn->data, an->grad, n, m, k, 0, 0, 0, false, true, true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::gemm_acc(an->data, o.grad, bn->grad, k, n, m, 0, 0, 0, true, false, true);
    }
  });
  detail::gemm_acc(a.data(), b.data(), out.data(), n, k, m, 0, 0, 0, false, false, false);
  return out;
}

// batched matmul over the leading dim: (B,n,k) x (B,k,m); trans_b multiplies
// by the transpose of b's per-batch matrix ((B,m,k) input).
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
    throw ShapeError("bmm", a.shape(), b.shape());
  const int B = a.dim(0), n = a.dim(1), k = a.dim(2);
  const int m = trans_b ? b.dim(1) : b.dim(2);
  if ((trans_b ? b.dim(2) : b.dim(1)) != k) throw ShapeError("bmm", a.shape(), b.shape());
  auto an = a.node(), bn = b.node();
  Tensor<T> out =
      detail::make_op<T>({B, n, m}, {an, bn}, [an, bn, B, n, k, m, trans_b](Node<T>& o) {
        for (int s = 0; s < B; ++s) {
          int oa = s * n * k, ob = s * (trans_b ? m * k : k * m), oc = s * n * m;
          if (an->requires_grad) {
            an->ensure_grad();
            // dA = dC * B^T (or dC * B when B was transposed)
            detail::gemm_acc(o.grad, bn->data, an->grad, n, m, k, oc, ob, oa, false, !trans_b,
                             true);
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            if (trans_b)  // dB = dC^T * A, shape (m,k)
              detail::gemm_acc(o.grad, an->data, bn->grad, m, n, k, oc, oa, ob, true, false, true);
            else  // dB = A^T * dC, shape (k,m)
              detail::gemm_acc(an->data, o.grad, bn->grad, k, n, m, oa, oc, ob, true, false, true);
          }
        }
      });
  for (int s = 0; s < B; ++s)
    detail::gemm_acc(a.data(), b.data(), out.data(), n, k, m, s * n * k,
                     s * (trans_b ? m * k : k * m), s * n * m, false, trans_b, false);
  return out;
}

namespace detail {
// b broadcast over leading dims of a when b.shape is a suffix of a.shape
template <class T>
bool suffix_broadcast(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
  return true;
}
}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!detail::suffix_broadcast<T>(a.shape(), b.shape())) throw ShapeError("add", a.shape(), b.shape());
  auto an = a.node(), bn = b.node();
  const std::int64_t nb = b.numel();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an, bn}, [an, bn, nb](Node<T>& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        bn->grad[i % static_cast<std::size_t>(nb)] += o.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i % static_cast<std::size_t>(nb)];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("sub", a.shape(), b.shape());
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an, bn}, [an, bn](Node<T>& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul", a.shape(), b.shape());
  auto an = a.node(), bn = b.node();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an, bn}, [an, bn](Node<T>& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i] * an->data[i];
    }
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an}, [an, c](Node<T>& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * c;
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] * c;
  return out;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an}, [an](Node<T>& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] + c;
  return out;
}

template <class T, class F, class DF>
Tensor<T> unary_elementwise(const char* name, const Tensor<T>& a, F f, DF df) {
  (void)name;
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an}, [an, df](Node<T>& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      an->grad[i] += o.grad[i] * df(an->data[i], o.data[i]);
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = f(a.data()[i]);
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_elementwise(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  return unary_elementwise(
      "gelu", a,
      [](T x) {
        double xd = double(x);
        return T(0.5 * xd * (1.0 + std::erf(xd * M_SQRT1_2)));
      },
      [](T x, T) {
        double xd = double(x);
        double cdf = 0.5 * (1.0 + std::erf(xd * M_SQRT1_2));
        double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * M_PI);
        return T(cdf + xd * pdf);
      });
}

template <class T>
Tensor<T> tanh_t(const Tensor<T>& a) {
  return unary_elementwise(
      "tanh", a, [](T x) { return T(std::tanh(double(x))); },
      [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> log_t(const Tensor<T>& a) {
  return unary_elementwise(
      "log", a, [](T x) { return T(std::log(double(x))); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> exp_t(const Tensor<T>& a) {
  return unary_elementwise(
      "exp", a, [](T x) { return T(std::exp(double(x))); }, [](T, T y) { return y; });
}

// clamp from below; gradient is passed only where the input was above the floor
template <class T>
Tensor<T> clamp_min(const Tensor<T>& a, T lo) {
  return unary_elementwise(
      "clamp_min", a, [lo](T x) { return x < lo ? lo : x; },
      [lo](T x, T) { return x < lo ? T(0) : T(1); });
}

// softmax over the last dimension of any rank
template <class T>
Tensor<T> row_softmax(const Tensor<T>& a) {
  const int d = a.dim(a.rank() - 1);
  const std::int64_t rows = a.numel() / d;
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an}, [an, rows, d](Node<T>& o) {
    an->ensure_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r * d);
      double dot = 0.0;
      for (int j = 0; j < d; ++j)
        dot += double(o.grad[off + static_cast<std::size_t>(j)]) *
               double(o.data[off + static_cast<std::size_t>(j)]);
      for (int j = 0; j < d; ++j) {
        std::size_t i = off + static_cast<std::size_t>(j);
        an->grad[i] += T(double(o.data[i]) * (double(o.grad[i]) - dot));
      }
    }
  });
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r * d);
    T m = a.data()[off];
    for (int j = 1; j < d; ++j) m = std::max(m, a.data()[off + static_cast<std::size_t>(j)]);
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      double e = std::exp(double(a.data()[off + static_cast<std::size_t>(j)] - m));
      out.data()[off + static_cast<std::size_t>(j)] = T(e);
      z += e;
    }
    for (int j = 0; j < d; ++j) out.data()[off + static_cast<std::size_t>(j)] = T(double(out.data()[off + static_cast<std::size_t>(j)]) / z);
  }
  return out;
}

// layer norm over the last dimension with affine parameters gamma, beta of
// shape [d]; normalization statistics accumulate in double
template <class T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5) {
  const int d = a.dim(a.rank() - 1);
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm", a.shape(), gamma.shape());
  const std::int64_t rows = a.numel() / d;
  auto an = a.node(), gn = gamma.node(), bn = beta.node();

  // cache normalized values and inverse stddev for backward
  auto xhat = std::make_shared<std::vector<double>>(a.data().size());
  auto istd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));

  Tensor<T> out =
      detail::make_op<T>(a.shape(), {an, gn, bn}, [an, gn, bn, rows, d, xhat, istd](Node<T>& o) {
        for (std::int64_t r = 0; r < rows; ++r) {
          const std::size_t off = static_cast<std::size_t>(r * d);
          double sum_dy = 0.0, sum_dyx = 0.0;
          for (int j = 0; j < d; ++j) {
            std::size_t i = off + static_cast<std::size_t>(j);
            double dy = double(o.grad[i]) * double(gn->data[static_cast<std::size_t>(j)]);
            sum_dy += dy;
            sum_dyx += dy * (*xhat)[i];
          }
          if (an->requires_grad) {
            an->ensure_grad();
            for (int j = 0; j < d; ++j) {
              std::size_t i = off + static_cast<std::size_t>(j);
              double dy = double(o.grad[i]) * double(gn->data[static_cast<std::size_t>(j)]);
              double dx = (*istd)[static_cast<std::size_t>(r)] *
                          (dy - sum_dy / d - (*xhat)[i] * sum_dyx / d);
              an->grad[i] += T(dx);
            }
          }
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int j = 0; j < d; ++j) {
              std::size_t i = off + static_cast<std::size_t>(j);
              gn->grad[static_cast<std::size_t>(j)] += T(double(o.grad[i]) * (*xhat)[i]);
            }
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int j = 0; j < d; ++j)
              bn->grad[static_cast<std::size_t>(j)] += o.grad[off + static_cast<std::size_t>(j)];
          }
        }
      });

  for (std::int64_t r = 0; r < rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r * d);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += double(a.data()[off + static_cast<std::size_t>(j)]);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = double(a.data()[off + static_cast<std::size_t>(j)]) - mean;
      var += c * c;
    }
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    (*istd)[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < d; ++j) {
      std::size_t i = off + static_cast<std::size_t>(j);
      double xh = (double(a.data()[i]) - mean) * is;
      (*xhat)[i] = xh;
      out.data()[i] = T(xh * double(gamma.data()[static_cast<std::size_t>(j)]) +
                        double(beta.data()[static_cast<std::size_t>(j)]));
    }
  }
  return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>({1}, {an}, [an](Node<T>& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0];
  });
  double acc = 0.0;
  for (T v : a.data()) acc += double(v);
  out.data()[0] = T(acc);
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1.0 / double(a.numel())));
}

// concat along an axis (all other dims equal); rank <= 3
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  Shape shape = parts[0].shape();
  const int rank = static_cast<int>(shape.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat", "axis out of range");
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat", shape, p.shape());
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != shape[static_cast<std::size_t>(i)])
        throw ShapeError("concat", shape, p.shape());
    total += p.dim(axis);
  }
  shape[static_cast<std::size_t>(axis)] = total;

  // treat as (outer, axis, inner) blocks
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= shape[static_cast<std::size_t>(i)];

  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.dim(axis));

  Tensor<T> out =
      detail::make_op<T>(shape, nodes, [nodes, widths, outer, inner, total](Node<T>& o) {
        for (std::int64_t r = 0; r < outer; ++r) {
          std::int64_t col0 = 0;
          for (std::size_t p = 0; p < nodes.size(); ++p) {
            auto& pn = nodes[p];
            std::int64_t w = widths[p] * inner;
            if (pn->requires_grad) {
              pn->ensure_grad();
              for (std::int64_t c = 0; c < w; ++c)
                pn->grad[static_cast<std::size_t>(r * w + c)] +=
                    o.grad[static_cast<std::size_t>(r * total * inner + col0 + c)];
            }
            col0 += w;
          }
        }
      });
  for (std::int64_t r = 0; r < outer; ++r) {
    std::int64_t col0 = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      std::int64_t w = widths[p] * inner;
      for (std::int64_t c = 0; c < w; ++c)
        out.data()[static_cast<std::size_t>(r * total * inner + col0 + c)] =
            parts[p].data()[static_cast<std::size_t>(r * w + c)];
      col0 += w;
    }
  }
  return out;
}

// contiguous slice along one axis
template <class T>
Tensor<T> slice(const Tensor<T>& a, int axis, int start, int len) {
  const int rank = a.rank();
  if (axis < 0 || axis >= rank) throw ShapeError("slice", "axis out of range");
  if (start < 0 || len <= 0 || start + len > a.dim(axis))
    throw ShapeError("slice", "range out of bounds for " + shape_str(a.shape()));
  Shape shape = a.shape();
  shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= a.dim(i);
  const std::int64_t src_w = static_cast<std::int64_t>(a.dim(axis)) * inner;
  const std::int64_t dst_w = static_cast<std::int64_t>(len) * inner;
  const std::int64_t off0 = static_cast<std::int64_t>(start) * inner;

  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(shape, {an}, [an, outer, src_w, dst_w, off0](Node<T>& o) {
    an->ensure_grad();
    for (std::int64_t r = 0; r < outer; ++r)
      for (std::int64_t c = 0; c < dst_w; ++c)
        an->grad[static_cast<std::size_t>(r * src_w + off0 + c)] +=
            o.grad[static_cast<std::size_t>(r * dst_w + c)];
  });
  for (std::int64_t r = 0; r < outer; ++r)
    for (std::int64_t c = 0; c < dst_w; ++c)
      out.data()[static_cast<std::size_t>(r * dst_w + c)] =
          a.data()[static_cast<std::size_t>(r * src_w + off0 + c)];
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  if (numel_of(shape) != a.numel())
    throw ShapeError("reshape", a.shape(), shape);
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(shape, {an}, [an](Node<T>& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
  });
  out.data() = a.data();
  return out;
}

template <class T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d", "expects rank 2, got " + shape_str(a.shape()));
  const int n = a.dim(0), m = a.dim(1);
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>({m, n}, {an}, [an, n, m](Node<T>& o) {
    an->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        an->grad[static_cast<std::size_t>(i * m + j)] += o.grad[static_cast<std::size_t>(j * n + i)];
  });
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out.data()[static_cast<std::size_t>(j * n + i)] = a.data()[static_cast<std::size_t>(i * m + j)];
  return out;
}

// additive mask: out = a + mask_value where mask == 0, out = a elsewhere.
// mask is a constant tensor of the same shape; no gradient flows to it.
template <class T>
Tensor<T> masked_fill(const Tensor<T>& a, const Tensor<T>& mask, T mask_value) {
  if (a.shape() != mask.shape()) throw ShapeError("masked_fill", a.shape(), mask.shape());
  auto an = a.node();
  Tensor<T> out = detail::make_op<T>(a.shape(), {an}, [an](Node<T>& o) {
    an->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
  });
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = a.data()[i] + (mask.data()[i] == T(0) ? mask_value : T(0));
  return out;
}

template <class T>
Tensor<T> one_hot(const std::vector<int>& indices, int depth) {
  Tensor<T> out = Tensor<T>::zeros({static_cast<int>(indices.size()), depth});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= depth) throw ShapeError("one_hot", "index out of range");
    out.data()[i * static_cast<std::size_t>(depth) + static_cast<std::size_t>(indices[i])] = T(1);
  }
  return out;
}

// gather rows of a [vocab, d] table; backward scatter-adds
template <class T>
Tensor<T> embedding_select(const Tensor<T>& table, const std::vector<int>& indices) {
  if (table.rank() != 2) throw ShapeError("embedding_select", "table must be rank 2");
  const int d = table.dim(1), vocab = table.dim(0);
  for (int ix : indices)
    if (ix < 0 || ix >= vocab) throw ShapeError("embedding_select", "index out of range");
  auto tn = table.node();
  auto idx = std::make_shared<std::vector<int>>(indices);
  Tensor<T> out = detail::make_op<T>({static_cast<int>(indices.size()), d}, {tn},
                                     [tn, idx, d](Node<T>& o) {
                                       tn->ensure_grad();
                                       for (std::size_t i = 0; i < idx->size(); ++i)
                                         for (int j = 0; j < d; ++j)
                                           tn->grad[static_cast<std::size_t>((*idx)[i] * d + j)] +=
                                               o.grad[i * static_cast<std::size_t>(d) +
                                                      static_cast<std::size_t>(j)];
                                     });
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (int j = 0; j < d; ++j)
      out.data()[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
          table.data()[static_cast<std::size_t>(indices[i] * d + j)];
  return out;
}

// ---------------------------------------------------------------------------
// backward pass

template <class T>
void backward(Tensor<T>& loss) {
  if (loss.numel() != 1) throw DomainError("backward: loss must be a scalar");
  auto root = loss.node();
  if (!root->requires_grad)
    throw DomainError("backward: loss does not depend on any trainable tensor");
  if (!root->grad.empty() && root->grad[0] != T(0))
    throw DomainError("backward: repeated backward on the same graph");

  // iterative post-order DFS over parents
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      Node<T>* p = node->parents[child].get();
      ++child;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : topo) n->ensure_grad();
  root->grad[0] = T(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// gradient checking

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
};

// Central finite differences per (sampled) coordinate against the analytic
// gradient. fn must rebuild the graph from the current parameter values and
// return the scalar loss tensor.
template <class T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& fn, std::vector<Tensor<T>> params,
                           double step = 1e-5, std::size_t max_coords_per_param = 64,
                           std::uint64_t seed = 0) {
  for (auto& p : params) p.zero_grad();
  Tensor<T> loss = fn();
  backward(loss);
  std::vector<std::vector<T>> analytic;
  for (auto& p : params) {
    p.node()->ensure_grad();
    analytic.push_back(p.grad());
  }

  Rng rng(derive_seed(seed, 0x6c6b));
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& data = params[pi].data();
    std::vector<std::size_t> coords;
    if (data.size() <= max_coords_per_param) {
      for (std::size_t c = 0; c < data.size(); ++c) coords.push_back(c);
    } else {
      for (std::size_t k = 0; k < max_coords_per_param; ++k)
        coords.push_back(static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1)));
    }
    for (std::size_t c : coords) {
      T saved = data[c];
      data[c] = saved + T(step);
      double fp = double(fn().scalar());
      data[c] = saved - T(step);
      double fm = double(fn().scalar());
      data[c] = saved;
      double fd = (fp - fm) / (2.0 * step);
      double an = double(analytic[pi][c]);
      double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      double rel = std::abs(fd - an) / denom;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = pi;
        res.worst_coord = c;
      }
    }
  }
  return res;
}

}  // namespace sic::ad
