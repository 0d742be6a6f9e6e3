#include "tsforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tsforge {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

thread_local Tape* g_active_tape = nullptr;

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<double> value,
                                              bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(value);
  impl->requires_grad = requires_grad;
  return impl;
}

void add_into(std::vector<double>& dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

int normalize_axis(int axis, std::size_t ndim) {
  int nd = static_cast<int>(ndim);
  int a = axis < 0 ? axis + nd : axis;
  if (a < 0 || a >= nd) {
    throw ParameterError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(ndim));
  }
  return a;
}

// How the second operand of add/sub/mul lines up with the first.
enum class Align { kSame, kScalar, kSuffix };

Align classify_alignment(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Align::kSame;
  if (shape_numel(b) == 1) return Align::kScalar;
  if (b.size() < a.size() &&
      std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()))) {
    return Align::kSuffix;
  }
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace detail {

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

void record_node(std::shared_ptr<TensorImpl> out, std::function<void(const TensorImpl&)> pull) {
  Tape* tape = g_active_tape;
  if (tape == nullptr || !out->requires_grad) return;
  out->node_id = tape->nodes_.size();
  tape->nodes_.push_back(Tape::Node{std::move(out), std::move(pull)});
}

}  // namespace detail

// ---- Tape ------------------------------------------------------------------

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  auto& seed = *loss.impl();
  seed.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out->grad.empty()) continue;  // not on a path from the loss
    it->pull(*it->out);
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw ContractError("backward called without an active tape");
  tape->backward(loss);
}

// ---- Tensor ----------------------------------------------------------------

detail::TensorImpl& Tensor::ref() const {
  if (!impl_) throw ContractError("operation on an undefined tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, fill), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("from_data: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  return Tensor(make_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor(make_impl(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::rand_open01(Shape shape, Rng& rng) {
  std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform_open01();
  return Tensor(make_impl(std::move(shape), std::move(v), false));
}

const Shape& Tensor::shape() const { return ref().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ParameterError("dim " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(s.size()));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return ref().value.size(); }

std::span<const double> Tensor::values() const { return ref().value; }
std::span<double> Tensor::values() { return ref().value; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
  }
  return ref().value[0];
}

bool Tensor::requires_grad() const { return ref().requires_grad; }
void Tensor::set_requires_grad(bool requires_grad) { ref().requires_grad = requires_grad; }

bool Tensor::has_grad() const { return !ref().grad.empty(); }

std::span<const double> Tensor::grad() const {
  const auto& impl = ref();
  if (impl.grad.empty()) {
    throw ContractError("tensor has no gradient (backward has not reached it)");
  }
  return impl.grad;
}

void Tensor::zero_grad() { ref().grad.clear(); }

std::optional<std::size_t> Tensor::node_id() const { return ref().node_id; }

Tensor Tensor::clone() const {
  const auto& impl = ref();
  return Tensor(make_impl(impl.shape, impl.value, impl.requires_grad));
}

// ---- matmul -----------------------------------------------------------

namespace {

using detail::TensorImpl;

// C[m x n] += A[m x k] * B[k x n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m x k] += G[m x n] * B^T (B is k x n)
void gemm_acc_bt(const double* g, const double* b, double* da, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* darow = da + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      darow[kk] += acc;
    }
  }
}

// dB[k x n] += A^T * G (A is m x k, G is m x n)
void gemm_acc_at(const double* a, const double* g, double* db, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      double* dbrow = db + kk * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  std::size_t m = sa[sa.size() - 2];
  std::size_t k = sa[sa.size() - 1];
  std::size_t kb = sb[sb.size() - 2];
  std::size_t n = sb[sb.size() - 1];
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(sa) + " x " +
                         shape_str(sb));
  }
  bool b_shared = sb.size() == 2;
  if (!b_shared &&
      !std::equal(sa.begin(), sa.end() - 2, sb.begin(), sb.end() - 2)) {
    throw DimensionError("matmul: leading dimensions differ, " + shape_str(sa) + " x " +
                         shape_str(sb));
  }
  Shape out_shape(sa.begin(), sa.end() - 2);
  std::size_t batches = shape_numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(batches * m * n, 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < batches; ++i) {
    gemm_acc(pa + i * m * k, b_shared ? pb : pb + i * k * n, out.data() + i * m * n, m, k, n);
  }

  bool needs = a.requires_grad() || b.requires_grad();
  Tensor result = Tensor::from_data(std::move(out_shape), std::move(out), needs);
  if (needs) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record_node(result.impl(), [ai, bi, batches, m, k, n, b_shared](const TensorImpl& o) {
      const double* g = o.grad.data();
      if (ai->requires_grad) {
        double* da = ai->grad_buffer().data();
        const double* pb = bi->value.data();
        for (std::size_t i = 0; i < batches; ++i) {
          gemm_acc_bt(g + i * m * n, b_shared ? pb : pb + i * k * n, da + i * m * k, m, k, n);
        }
      }
      if (bi->requires_grad) {
        double* db = bi->grad_buffer().data();
        const double* pa = ai->value.data();
        for (std::size_t i = 0; i < batches; ++i) {
          gemm_acc_at(pa + i * m * k, g + i * m * n, b_shared ? db : db + i * k * n, m, k, n);
        }
      }
    });
  }
  return result;
}

// ---- elementwise add/sub/mul/scale/mean/square --------------------------

namespace {

Tensor add_like(const Tensor& a, const Tensor& b, double sign) {
  const char* opname = sign > 0 ? "add" : "sub";
  Align align = classify_alignment(a.shape(), b.shape(), opname);
  std::size_t n = a.numel();
  std::size_t nb = b.numel();
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* pb = b.values().data();
  switch (align) {
    case Align::kSame:
      for (std::size_t i = 0; i < n; ++i) out[i] += sign * pb[i];
      break;
    case Align::kScalar:
      for (std::size_t i = 0; i < n; ++i) out[i] += sign * pb[0];
      break;
    case Align::kSuffix:
      for (std::size_t i = 0; i < n; ++i) out[i] += sign * pb[i % nb];
      break;
  }
  bool needs = a.requires_grad() || b.requires_grad();
  Tensor result = Tensor::from_data(a.shape(), std::move(out), needs);
  if (needs) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record_node(result.impl(), [ai, bi, align, sign, n, nb](const TensorImpl& o) {
      const double* g = o.grad.data();
      if (ai->requires_grad) add_into(ai->grad_buffer(), o.grad);
      if (bi->requires_grad) {
        double* db = bi->grad_buffer().data();
        switch (align) {
          case Align::kSame:
            for (std::size_t i = 0; i < n; ++i) db[i] += sign * g[i];
            break;
          case Align::kScalar:
            for (std::size_t i = 0; i < n; ++i) db[0] += sign * g[i];
            break;
          case Align::kSuffix:
            for (std::size_t i = 0; i < n; ++i) db[i % nb] += sign * g[i];
            break;
        }
      }
    });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_like(a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_like(a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
  // Allow a scalar on either side; otherwise shapes must match exactly.
  if (a.numel() == 1 && b.numel() != 1) return mul(b, a);
  if (a.shape() != b.shape() && b.numel() != 1) {
    throw DimensionError("mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not match");
  }
  std::size_t n = a.numel();
  bool b_scalar = b.numel() == 1;
  std::vector<double> out(n);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * (b_scalar ? pb[0] : pb[i]);

  bool needs = a.requires_grad() || b.requires_grad();
  Tensor result = Tensor::from_data(a.shape(), std::move(out), needs);
  if (needs) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record_node(result.impl(), [ai, bi, n, b_scalar](const TensorImpl& o) {
      const double* g = o.grad.data();
      if (ai->requires_grad) {
        double* da = ai->grad_buffer().data();
        const double* pb = bi->value.data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * (b_scalar ? pb[0] : pb[i]);
      }
      if (bi->requires_grad) {
        double* db = bi->grad_buffer().data();
        const double* pa = ai->value.data();
        if (b_scalar) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += g[i] * pa[i];
          db[0] += acc;
        } else {
          for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * pa[i];
        }
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  const double* pa = a.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * factor;
  bool needs = a.requires_grad();
  Tensor result = Tensor::from_data(a.shape(), std::move(out), needs);
  if (needs) {
    auto ai = a.impl();
    detail::record_node(result.impl(), [ai, factor, n](const TensorImpl& o) {
      double* da = ai->grad_buffer().data();
      const double* g = o.grad.data();
      for (std::size_t i = 0; i < n; ++i) da[i] += factor * g[i];
    });
  }
  return result;
}

Tensor mean(const Tensor& a) {
  std::size_t n = a.numel();
  double sum = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  bool needs = a.requires_grad();
  Tensor result = Tensor::from_data({1}, {sum / static_cast<double>(n)}, needs);
  if (needs) {
    auto ai = a.impl();
    detail::record_node(result.impl(), [ai, n](const TensorImpl& o) {
      double g = o.grad[0] / static_cast<double>(n);
      double* da = ai->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) da[i] += g;
    });
  }
  return result;
}

Tensor square(const Tensor& a) {
  std::size_t n = a.numel();
  std::vector<double> out(n);
  const double* pa = a.values().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * pa[i];
  bool needs = a.requires_grad();
  Tensor result = Tensor::from_data(a.shape(), std::move(out), needs);
  if (needs) {
    auto ai = a.impl();
    detail::record_node(result.impl(), [ai, n](const TensorImpl& o) {
      double* da = ai->grad_buffer().data();
      const double* g = o.grad.data();
      const double* pa = ai->value.data();
      for (std::size_t i = 0; i < n; ++i) da[i] += 2.0 * pa[i] * g[i];
    });
  }
  return result;
}

// ---- softmax ------------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
  int ax = normalize_axis(axis, a.ndim());
  const Shape& s = a.shape();
  std::size_t len = s[static_cast<std::size_t>(ax)];
  std::size_t inner = 1;
  for (std::size_t i = static_cast<std::size_t>(ax) + 1; i < s.size(); ++i) inner *= s[i];
  std::size_t outer = a.numel() / (len * inner);

  std::vector<double> out(a.numel());
  const double* pa = a.values().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const double* lane = pa + o * len * inner + in;
      double* olane = out.data() + o * len * inner + in;
      double mx = lane[0];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, lane[i * inner]);
      double denom = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        double e = std::exp(lane[i * inner] - mx);
        olane[i * inner] = e;
        denom += e;
      }
      for (std::size_t i = 0; i < len; ++i) olane[i * inner] /= denom;
    }
  }

  bool needs = a.requires_grad();
  Tensor result = Tensor::from_data(s, std::move(out), needs);
  if (needs) {
    auto ai = a.impl();
    auto oi = result.impl();
    detail::record_node(result.impl(), [ai, oi, outer, len, inner](const TensorImpl& o) {
      double* da = ai->grad_buffer().data();
      const double* g = o.grad.data();
      const double* y = oi->value.data();
      for (std::size_t ou = 0; ou < outer; ++ou) {
        for (std::size_t in = 0; in < inner; ++in) {
          std::size_t base = ou * len * inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
          for (std::size_t i = 0; i < len; ++i) {
            da[base + i * inner] += y[base + i * inner] * (g[base + i * inner] - dot);
          }
        }
      }
    });
  }
  return result;
}

// ---- layer_norm -----------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps < 0.0) throw ParameterError("layer_norm: eps must be >= 0");
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("layer_norm: input must have rank >= 1");
  std::size_t width = s.back();
  if (gamma.numel() != width || beta.numel() != width) {
    throw DimensionError("layer_norm: gamma/beta of shapes " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match last axis of " + shape_str(s));
  }
  std::size_t rows = x.numel() / width;

  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const double* px = x.values().data();
  const double* pg = gamma.values().data();
  const double* pb = beta.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = px + r * width;
    double mu = 0.0;
    for (std::size_t i = 0; i < width; ++i) mu += row[i];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      double d = row[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(width);
    double denom = std::sqrt(var + eps);
    double inv = denom > 0.0 ? 1.0 / denom : 0.0;  // constant row with eps=0 maps to beta
    inv_std[r] = inv;
    for (std::size_t i = 0; i < width; ++i) {
      double xh = (row[i] - mu) * inv;
      xhat[r * width + i] = xh;
      out[r * width + i] = pg[i] * xh + pb[i];
    }
  }

  bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Tensor result = Tensor::from_data(s, std::move(out), needs);
  if (needs) {
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
    auto inv = std::make_shared<std::vector<double>>(std::move(inv_std));
    detail::record_node(result.impl(), [xi, gi, bi, xh, inv, rows, width](const TensorImpl& o) {
      const double* g = o.grad.data();
      const double* hat = xh->data();
      if (gi->requires_grad) {
        double* dg = gi->grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < width; ++i) dg[i] += g[r * width + i] * hat[r * width + i];
        }
      }
      if (bi->requires_grad) {
        double* db = bi->grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t i = 0; i < width; ++i) db[i] += g[r * width + i];
        }
      }
      if (xi->requires_grad) {
        double* dx = xi->grad_buffer().data();
        const double* pg = gi->value.data();
        double w = static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (std::size_t i = 0; i < width; ++i) {
            double dxhat = g[r * width + i] * pg[i];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * hat[r * width + i];
          }
          mean_dxhat /= w;
          mean_dxhat_xhat /= w;
          for (std::size_t i = 0; i < width; ++i) {
            double dxhat = g[r * width + i] * pg[i];
            dx[r * width + i] +=
                (*inv)[r] * (dxhat - mean_dxhat - hat[r * width + i] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return result;
}

// ---- gelu -------------------------------------------------------------

Tensor gelu(const Tensor& x) {
  std::size_t n = x.numel();
  std::vector<double> out(n);
  const double* px = x.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    double cdf = 0.5 * (1.0 + std::erf(px[i] * kInvSqrt2));
    out[i] = px[i] * cdf;
  }
  bool needs = x.requires_grad();
  Tensor result = Tensor::from_data(x.shape(), std::move(out), needs);
  if (needs) {
    auto xi = x.impl();
    detail::record_node(result.impl(), [xi, n](const TensorImpl& o) {
      double* dx = xi->grad_buffer().data();
      const double* g = o.grad.data();
      const double* px = xi->value.data();
      for (std::size_t i = 0; i < n; ++i) {
        double v = px[i];
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return result;
}

// ---- dropout -----------------------------------------------------------

Tensor dropout(const Tensor& x, double p, bool training, Rng* rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ParameterError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;  // identity, gradient passes through unchanged
  if (rng == nullptr) throw ContractError("dropout: training mode with p > 0 needs an rng");

  std::size_t n = x.numel();
  double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(n);
  const double* px = x.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    double m = rng->uniform_open01() < p ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out[i] = px[i] * m;
  }
  bool needs = x.requires_grad();
  Tensor result = Tensor::from_data(x.shape(), std::move(out), needs);
  if (needs) {
    auto xi = x.impl();
    detail::record_node(result.impl(), [xi, mask, n](const TensorImpl& o) {
      double* dx = xi->grad_buffer().data();
      const double* g = o.grad.data();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * (*mask)[i];
    });
  }
  return result;
}

// ---- pointwise_channel_projection ---------------------------------------

Tensor pointwise_channel_projection(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] != 1) {
    throw DimensionError("pointwise_channel_projection: input must be (B, H, 1, W), got " +
                         shape_str(s));
  }
  const Shape& sw = weight.shape();
  if (sw.size() != 2 || sw[1] != s[1]) {
    throw DimensionError("pointwise_channel_projection: weight " + shape_str(sw) +
                         " does not map input channels of " + shape_str(s));
  }
  std::size_t b = s[0], h = s[1], w = s[3], c = sw[0];
  if (bias.numel() != c) {
    throw DimensionError("pointwise_channel_projection: bias " + shape_str(bias.shape()) +
                         " does not match output channels " + std::to_string(c));
  }

  std::vector<double> out(b * c * w);
  const double* px = x.values().data();
  const double* pw = weight.values().data();
  const double* pbias = bias.values().data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    const double* xb = px + bi * h * w;
    double* ob = out.data() + bi * c * w;
    for (std::size_t ci = 0; ci < c; ++ci) {
      double* orow = ob + ci * w;
      for (std::size_t t = 0; t < w; ++t) orow[t] = pbias[ci];
      for (std::size_t hi = 0; hi < h; ++hi) {
        double wv = pw[ci * h + hi];
        if (wv == 0.0) continue;
        const double* xrow = xb + hi * w;
        for (std::size_t t = 0; t < w; ++t) orow[t] += wv * xrow[t];
      }
    }
  }

  bool needs = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  Tensor result = Tensor::from_data({b, c, 1, w}, std::move(out), needs);
  if (needs) {
    auto xi = x.impl();
    auto wi = weight.impl();
    auto bi2 = bias.impl();
    detail::record_node(result.impl(), [xi, wi, bi2, b, h, w, c](const TensorImpl& o) {
      const double* g = o.grad.data();
      if (xi->requires_grad) {
        double* dx = xi->grad_buffer().data();
        const double* pw = wi->value.data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          for (std::size_t hi = 0; hi < h; ++hi) {
            double* dxrow = dx + (bi * h + hi) * w;
            for (std::size_t ci = 0; ci < c; ++ci) {
              double wv = pw[ci * h + hi];
              if (wv == 0.0) continue;
              const double* grow = g + (bi * c + ci) * w;
              for (std::size_t t = 0; t < w; ++t) dxrow[t] += wv * grow[t];
            }
          }
        }
      }
      if (wi->requires_grad) {
        double* dw = wi->grad_buffer().data();
        const double* px = xi->value.data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          for (std::size_t ci = 0; ci < c; ++ci) {
            const double* grow = g + (bi * c + ci) * w;
            for (std::size_t hi = 0; hi < h; ++hi) {
              const double* xrow = px + (bi * h + hi) * w;
              double acc = 0.0;
              for (std::size_t t = 0; t < w; ++t) acc += grow[t] * xrow[t];
              dw[ci * h + hi] += acc;
            }
          }
        }
      }
      if (bi2->requires_grad) {
        double* db = bi2->grad_buffer().data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          for (std::size_t ci = 0; ci < c; ++ci) {
            const double* grow = g + (bi * c + ci) * w;
            for (std::size_t t = 0; t < w; ++t) db[ci] += grow[t];
          }
        }
      }
    });
  }
  return result;
}

// ---- data movement -------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  bool needs = x.requires_grad();
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor result = Tensor::from_data(std::move(shape), std::move(out), needs);
  if (needs) {
    auto xi = x.impl();
    detail::record_node(result.impl(), [xi](const TensorImpl& o) {
      add_into(xi->grad_buffer(), o.grad);
    });
  }
  return result;
}

namespace {

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> strides(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) strides[i - 1] = strides[i] * s[i];
  return strides;
}

void permute_copy(const double* src, double* dst, const Shape& out_shape,
                  const std::vector<std::size_t>& src_strides_by_out_axis) {
  std::size_t nd = out_shape.size();
  std::vector<std::size_t> idx(nd, 0);
  std::size_t n = shape_numel(out_shape);
  std::size_t src_off = 0;
  for (std::size_t linear = 0; linear < n; ++linear) {
    dst[linear] = src[src_off];
    for (std::size_t d = nd; d-- > 0;) {
      idx[d]++;
      src_off += src_strides_by_out_axis[d];
      if (idx[d] < out_shape[d]) break;
      src_off -= src_strides_by_out_axis[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  std::size_t nd = s.size();
  if (axes.size() != nd) {
    throw ParameterError("permute: axes size " + std::to_string(axes.size()) +
                         " does not match rank " + std::to_string(nd));
  }
  std::vector<bool> seen(nd, false);
  for (std::size_t a : axes) {
    if (a >= nd || seen[a]) throw ParameterError("permute: axes are not a permutation");
    seen[a] = true;
  }

  Shape out_shape(nd);
  std::vector<std::size_t> in_strides = row_major_strides(s);
  std::vector<std::size_t> gather_strides(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    out_shape[i] = s[axes[i]];
    gather_strides[i] = in_strides[axes[i]];
  }

  std::vector<double> out(x.numel());
  permute_copy(x.values().data(), out.data(), out_shape, gather_strides);

  bool needs = x.requires_grad();
  Tensor result = Tensor::from_data(out_shape, std::move(out), needs);
  if (needs) {
    auto xi = x.impl();
    // scatter = gather with the inverse permutation
    std::vector<std::size_t> inv(nd);
    for (std::size_t i = 0; i < nd; ++i) inv[axes[i]] = i;
    std::vector<std::size_t> out_strides = row_major_strides(out_shape);
    std::vector<std::size_t> scatter_strides(nd);
    Shape in_shape = s;
    for (std::size_t i = 0; i < nd; ++i) scatter_strides[i] = out_strides[inv[i]];
    detail::record_node(result.impl(), [xi, in_shape, scatter_strides](const TensorImpl& o) {
      std::vector<double> dg(o.grad.size());
      permute_copy(o.grad.data(), dg.data(), in_shape, scatter_strides);
      add_into(xi->grad_buffer(), dg);
    });
  }
  return result;
}

Tensor concat_token(const Tensor& token, const Tensor& tokens) {
  const Shape& st = token.shape();
  const Shape& s = tokens.shape();
  if (s.size() != 3) {
    throw DimensionError("concat_token: token batch must be (B, T, M), got " + shape_str(s));
  }
  if (st.size() != 2 || st[0] != 1 || st[1] != s[2]) {
    throw DimensionError("concat_token: token " + shape_str(st) + " does not match batch " +
                         shape_str(s));
  }
  std::size_t b = s[0], t = s[1], m = s[2];
  std::vector<double> out(b * (t + 1) * m);
  const double* ptok = token.values().data();
  const double* px = tokens.values().data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    double* row = out.data() + bi * (t + 1) * m;
    std::copy(ptok, ptok + m, row);
    std::copy(px + bi * t * m, px + (bi + 1) * t * m, row + m);
  }
  bool needs = token.requires_grad() || tokens.requires_grad();
  Tensor result = Tensor::from_data({b, t + 1, m}, std::move(out), needs);
  if (needs) {
    auto ti = token.impl();
    auto xi = tokens.impl();
    detail::record_node(result.impl(), [ti, xi, b, t, m](const TensorImpl& o) {
      const double* g = o.grad.data();
      if (ti->requires_grad) {
        double* dt = ti->grad_buffer().data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          const double* grow = g + bi * (t + 1) * m;
          for (std::size_t i = 0; i < m; ++i) dt[i] += grow[i];
        }
      }
      if (xi->requires_grad) {
        double* dx = xi->grad_buffer().data();
        for (std::size_t bi = 0; bi < b; ++bi) {
          const double* grow = g + bi * (t + 1) * m + m;
          double* drow = dx + bi * t * m;
          for (std::size_t i = 0; i < t * m; ++i) drow[i] += grow[i];
        }
      }
    });
  }
  return result;
}

Tensor select_token(const Tensor& tokens, std::size_t index) {
  const Shape& s = tokens.shape();
  if (s.size() != 3) {
    throw DimensionError("select_token: token batch must be (B, T, M), got " + shape_str(s));
  }
  std::size_t b = s[0], t = s[1], m = s[2];
  if (index >= t) {
    throw ParameterError("select_token: index " + std::to_string(index) + " out of range for " +
                         std::to_string(t) + " tokens");
  }
  std::vector<double> out(b * m);
  const double* px = tokens.values().data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    std::copy(px + (bi * t + index) * m, px + (bi * t + index + 1) * m, out.data() + bi * m);
  }
  bool needs = tokens.requires_grad();
  Tensor result = Tensor::from_data({b, m}, std::move(out), needs);
  if (needs) {
    auto xi = tokens.impl();
    detail::record_node(result.impl(), [xi, b, t, m, index](const TensorImpl& o) {
      double* dx = xi->grad_buffer().data();
      const double* g = o.grad.data();
      for (std::size_t bi = 0; bi < b; ++bi) {
        double* drow = dx + (bi * t + index) * m;
        for (std::size_t i = 0; i < m; ++i) drow[i] += g[bi * m + i];
      }
    });
  }
  return result;
}

Tensor detach(const Tensor& x) {
  return Tensor::from_data(x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
                           false);
}

}  // namespace tsforge
