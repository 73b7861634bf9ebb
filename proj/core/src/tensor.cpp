#include "ptlab/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "ptlab/error.hpp"

namespace ptlab {

namespace {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double as_f64(const Tensor& t) {
  return t.d->has_precise ? t.d->precise : static_cast<double>(t.d->value[0]);
}

void set_precise(Tensor& t, double v) {
  t.d->precise = v;
  t.d->has_precise = true;
  t.d->value[0] = static_cast<float>(v);
}

void check_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw Error(ErrorCategory::internal,
                std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorCategory::internal, std::string(op) + ": shape mismatch: " +
                                           shape_str(a) + " vs " + shape_str(b));
}

bool grad_flows(const Graph& g, const Tensor& t) {
  return t.requires_grad() || g.tracked(t);
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

void TensorData::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.d = std::make_shared<TensorData>();
  int64_t n = shape_numel(shape);
  t.d->shape = std::move(shape);
  t.d->value.assign(static_cast<size_t>(n), 0.0f);
  t.d->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, float v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.d->value.begin(), t.d->value.end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> v, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size()))
    throw Error(ErrorCategory::internal,
                "tensor: data length " + std::to_string(v.size()) +
                    " does not match shape " + shape_str(shape));
  Tensor t;
  t.d = std::make_shared<TensorData>();
  t.d->shape = std::move(shape);
  t.d->value = std::move(v);
  t.d->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t = zeros(Shape{});
  set_precise(t, v);
  return t;
}

std::span<float> Tensor::grad() {
  d->ensure_grad();
  return d->grad;
}

std::span<const float> Tensor::grad() const { return d->grad; }

void Tensor::zero_grad() {
  if (!d->grad.empty()) std::fill(d->grad.begin(), d->grad.end(), 0.0f);
}

float Tensor::item() const {
  if (numel() != 1)
    throw Error(ErrorCategory::internal,
                "item: tensor has shape " + shape_str(shape()) + ", expected scalar");
  return d->value[0];
}

double Tensor::item64() const {
  if (d->has_precise) return d->precise;
  return static_cast<double>(item());
}

Tensor Tensor::clone() const {
  Tensor t;
  t.d = std::make_shared<TensorData>();
  t.d->shape = d->shape;
  t.d->value = d->value;
  t.d->requires_grad = d->requires_grad;
  t.d->has_precise = d->has_precise;
  t.d->precise = d->precise;
  return t;
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

bool Graph::tracked(const Tensor& t) const {
  return t.defined() && ids_.count(t.d.get()) > 0;
}

int Graph::node_id(const Tensor& t) const {
  auto it = ids_.find(t.d.get());
  return it == ids_.end() ? -1 : it->second;
}

int Graph::track_input(const Tensor& t) {
  auto it = ids_.find(t.d.get());
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(slots_.size());
  slots_.push_back(t.d);
  ids_.emplace(t.d.get(), id);
  return id;
}

int Graph::add_node(const char* op, std::vector<int> inputs, const Tensor& out,
                    std::function<void()> backward_fn) {
  int id = static_cast<int>(slots_.size());
  slots_.push_back(out.d);
  ids_.emplace(out.d.get(), id);
  nodes_.push_back(Node{op, std::move(inputs), id, std::move(backward_fn)});
  exec_counts_.push_back(0);
  return id;
}

void Graph::backward(const Tensor& loss) {
  if (backward_done_)
    throw Error(ErrorCategory::internal, "backward: already ran on this graph");
  if (!loss.defined() || loss.numel() != 1)
    throw Error(ErrorCategory::internal,
                "backward: loss must be a scalar, got shape " +
                    (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!tracked(loss))
    throw Error(ErrorCategory::internal, "backward: loss is not part of this graph");

  loss.d->ensure_grad();
  loss.d->grad[0] += 1.0f;

  for (size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].backward_fn) {
      nodes_[i].backward_fn();
      nodes_[i].backward_fn = nullptr;  // release saved activations
    }
    exec_counts_[i] += 1;
  }
  backward_done_ = true;
}

// ---------------------------------------------------------------------------
// matmul family
// ---------------------------------------------------------------------------

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.dim(1) != b.dim(0)) shape_error("matmul: inner dimensions disagree", a.shape(), b.shape());
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);

  Tensor out = Tensor::zeros({m, n});
  {
    ECMap A(a.d->value.data(), m, k), B(b.d->value.data(), k, n);
    EMap C(out.d->value.data(), m, n);
    C.noalias() = A * B;
  }
  if (m == 1 && n == 1) {
    double acc = 0.0;
    for (int64_t i = 0; i < k; ++i)
      acc += static_cast<double>(a.d->value[i]) * static_cast<double>(b.d->value[i]);
    set_precise(out, acc);
  }

  if (grad_flows(g, a) || grad_flows(g, b)) {
    bool fa = grad_flows(g, a), fb = grad_flows(g, b);
    int ia = fa ? g.track_input(a) : -1;
    int ib = fb ? g.track_input(b) : -1;
    g.add_node("matmul", {ia, ib}, out, [ad = a.d, bd = b.d, od = out.d, m, k, n, fa, fb]() {
      ECMap dC(od->grad.data(), m, n);
      if (fa) {
        ad->ensure_grad();
        EMap dA(ad->grad.data(), m, k);
        ECMap B(bd->value.data(), k, n);
        dA.noalias() += dC * B.transpose();
      }
      if (fb) {
        bd->ensure_grad();
        EMap dB(bd->grad.data(), k, n);
        ECMap A(ad->value.data(), m, k);
        dB.noalias() += A.transpose() * dC;
      }
    });
  }
  return out;
}

Tensor matmul_nt(Graph& g, const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) shape_error("matmul_nt: inner dimensions disagree", a.shape(), b.shape());
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);

  Tensor out = Tensor::zeros({m, n});
  {
    ECMap A(a.d->value.data(), m, k), B(b.d->value.data(), n, k);
    EMap C(out.d->value.data(), m, n);
    C.noalias() = A * B.transpose();
  }
  if (m == 1 && n == 1) {
    double acc = 0.0;
    for (int64_t i = 0; i < k; ++i)
      acc += static_cast<double>(a.d->value[i]) * static_cast<double>(b.d->value[i]);
    set_precise(out, acc);
  }

  if (grad_flows(g, a) || grad_flows(g, b)) {
    bool fa = grad_flows(g, a), fb = grad_flows(g, b);
    int ia = fa ? g.track_input(a) : -1;
    int ib = fb ? g.track_input(b) : -1;
    g.add_node("matmul_nt", {ia, ib}, out, [ad = a.d, bd = b.d, od = out.d, m, k, n, fa, fb]() {
      ECMap dC(od->grad.data(), m, n);
      if (fa) {
        ad->ensure_grad();
        EMap dA(ad->grad.data(), m, k);
        ECMap B(bd->value.data(), n, k);
        dA.noalias() += dC * B;
      }
      if (fb) {
        bd->ensure_grad();
        EMap dB(bd->grad.data(), n, k);
        ECMap A(ad->value.data(), m, k);
        dB.noalias() += dC.transpose() * A;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// binary elementwise (with scalar broadcast)
// ---------------------------------------------------------------------------

namespace {

enum class Bcast { none, a_scalar, b_scalar };

Bcast binary_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Bcast::none;
  if (a.numel() == 1) return Bcast::a_scalar;
  if (b.numel() == 1) return Bcast::b_scalar;
  shape_error(op, a.shape(), b.shape());
}

}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  Bcast mode = binary_mode("add", a, b);
  const Tensor& big = (mode == Bcast::a_scalar) ? b : a;
  Tensor out = Tensor::zeros(big.shape());
  const size_t n = out.d->value.size();

  switch (mode) {
    case Bcast::none:
      for (size_t i = 0; i < n; ++i) out.d->value[i] = a.d->value[i] + b.d->value[i];
      break;
    case Bcast::a_scalar: {
      float s = a.d->value[0];
      for (size_t i = 0; i < n; ++i) out.d->value[i] = s + b.d->value[i];
      break;
    }
    case Bcast::b_scalar: {
      float s = b.d->value[0];
      for (size_t i = 0; i < n; ++i) out.d->value[i] = a.d->value[i] + s;
      break;
    }
  }
  if (n == 1) set_precise(out, as_f64(a) + as_f64(b));

  if (grad_flows(g, a) || grad_flows(g, b)) {
    bool fa = grad_flows(g, a), fb = grad_flows(g, b);
    int ia = fa ? g.track_input(a) : -1;
    int ib = fb ? g.track_input(b) : -1;
    g.add_node("add", {ia, ib}, out, [ad = a.d, bd = b.d, od = out.d, mode, fa, fb]() {
      const auto& dy = od->grad;
      auto accum_same = [&](TensorData& t) {
        t.ensure_grad();
        for (size_t i = 0; i < dy.size(); ++i) t.grad[i] += dy[i];
      };
      auto accum_scalar = [&](TensorData& t) {
        t.ensure_grad();
        double s = 0.0;
        for (float v : dy) s += v;
        t.grad[0] += static_cast<float>(s);
      };
      if (fa) (mode == Bcast::a_scalar ? accum_scalar(*ad) : accum_same(*ad));
      if (fb) (mode == Bcast::b_scalar ? accum_scalar(*bd) : accum_same(*bd));
    });
  }
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  Bcast mode = binary_mode("mul", a, b);
  const Tensor& big = (mode == Bcast::a_scalar) ? b : a;
  Tensor out = Tensor::zeros(big.shape());
  const size_t n = out.d->value.size();

  switch (mode) {
    case Bcast::none:
      for (size_t i = 0; i < n; ++i) out.d->value[i] = a.d->value[i] * b.d->value[i];
      break;
    case Bcast::a_scalar: {
      float s = a.d->value[0];
      for (size_t i = 0; i < n; ++i) out.d->value[i] = s * b.d->value[i];
      break;
    }
    case Bcast::b_scalar: {
      float s = b.d->value[0];
      for (size_t i = 0; i < n; ++i) out.d->value[i] = a.d->value[i] * s;
      break;
    }
  }
  if (n == 1) set_precise(out, as_f64(a) * as_f64(b));

  if (grad_flows(g, a) || grad_flows(g, b)) {
    bool fa = grad_flows(g, a), fb = grad_flows(g, b);
    int ia = fa ? g.track_input(a) : -1;
    int ib = fb ? g.track_input(b) : -1;
    g.add_node("mul", {ia, ib}, out, [ad = a.d, bd = b.d, od = out.d, mode, fa, fb]() {
      const auto& dy = od->grad;
      // d(a*b)/da = b, /db = a, with the scalar side summing over the other
      auto accum = [&](TensorData& t, const TensorData& other, bool t_is_scalar) {
        t.ensure_grad();
        if (t_is_scalar) {
          double s = 0.0;
          for (size_t i = 0; i < dy.size(); ++i)
            s += static_cast<double>(dy[i]) * other.value[i];
          t.grad[0] += static_cast<float>(s);
        } else if (other.value.size() == 1) {
          float s = other.value[0];
          for (size_t i = 0; i < dy.size(); ++i) t.grad[i] += dy[i] * s;
        } else {
          for (size_t i = 0; i < dy.size(); ++i) t.grad[i] += dy[i] * other.value[i];
        }
      };
      if (fa) accum(*ad, *bd, mode == Bcast::a_scalar);
      if (fb) accum(*bd, *ad, mode == Bcast::b_scalar);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// unary elementwise
// ---------------------------------------------------------------------------

namespace {

// dfdy(y_value, x_value) -> local derivative
template <class Fwd, class Dfdx>
Tensor unary_op(Graph& g, const Tensor& a, const char* name, Fwd fwd, Dfdx dfdx) {
  Tensor out = Tensor::zeros(a.shape());
  const size_t n = a.d->value.size();
  for (size_t i = 0; i < n; ++i)
    out.d->value[i] = static_cast<float>(fwd(static_cast<double>(a.d->value[i])));
  if (n == 1) set_precise(out, fwd(as_f64(a)));

  if (grad_flows(g, a)) {
    int ia = g.track_input(a);
    g.add_node(name, {ia}, out, [ad = a.d, od = out.d, dfdx]() {
      ad->ensure_grad();
      for (size_t i = 0; i < od->grad.size(); ++i)
        ad->grad[i] += od->grad[i] * static_cast<float>(dfdx(static_cast<double>(ad->value[i]),
                                                             static_cast<double>(od->value[i])));
    });
  }
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Tensor neg(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(Graph& g, const Tensor& a) {
  for (size_t i = 0; i < a.d->value.size(); ++i)
    if (!(a.d->value[i] > 0.0f))
      throw Error(ErrorCategory::internal,
                  "log: domain error: non-positive input " + std::to_string(a.d->value[i]) +
                      " at index " + std::to_string(i));
  return unary_op(
      g, a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, "sigmoid", [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, "softplus", [](double x) { return stable_softplus(x); },
      [](double x, double) { return stable_sigmoid(x); });
}

Tensor gelu(Graph& g, const Tensor& a) {
  return unary_op(
      g, a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor add_scalar(Graph& g, const Tensor& a, double c) {
  return unary_op(
      g, a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor scale(Graph& g, const Tensor& a, double c) {
  return unary_op(
      g, a, "scale", [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& b) {
  check_2d(x, "add_bias");
  if (b.rank() != 1 || b.dim(0) != x.dim(1)) shape_error("add_bias", x.shape(), b.shape());
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.d->value[i * n + j] = x.d->value[i * n + j] + b.d->value[j];

  if (grad_flows(g, x) || grad_flows(g, b)) {
    bool fx = grad_flows(g, x), fb = grad_flows(g, b);
    int ix = fx ? g.track_input(x) : -1;
    int ib = fb ? g.track_input(b) : -1;
    g.add_node("add_bias", {ix, ib}, out, [xd = x.d, bd = b.d, od = out.d, m, n, fx, fb]() {
      if (fx) {
        xd->ensure_grad();
        for (size_t i = 0; i < od->grad.size(); ++i) xd->grad[i] += od->grad[i];
      }
      if (fb) {
        bd->ensure_grad();
        for (int64_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (int64_t i = 0; i < m; ++i) s += od->grad[i * n + j];
          bd->grad[j] += static_cast<float>(s);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(Graph& g, const Tensor& a) {
  double acc = 0.0;
  for (float v : a.d->value) acc += v;
  Tensor out = Tensor::scalar(acc);

  if (grad_flows(g, a)) {
    int ia = g.track_input(a);
    g.add_node("sum", {ia}, out, [ad = a.d, od = out.d]() {
      ad->ensure_grad();
      float dy = od->grad[0];
      for (auto& gv : ad->grad) gv += dy;
    });
  }
  return out;
}

Tensor mean(Graph& g, const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (float v : a.d->value) acc += v;
  Tensor out = Tensor::scalar(acc / n);

  if (grad_flows(g, a)) {
    int ia = g.track_input(a);
    g.add_node("mean", {ia}, out, [ad = a.d, od = out.d, n]() {
      ad->ensure_grad();
      float dy = static_cast<float>(od->grad[0] / n);
      for (auto& gv : ad->grad) gv += dy;
    });
  }
  return out;
}

namespace {

Tensor axis_reduce(Graph& g, const Tensor& a, int axis, bool take_mean, const char* name) {
  check_2d(a, name);
  if (axis != 0 && axis != 1)
    throw Error(ErrorCategory::internal, std::string(name) + ": axis must be 0 or 1");
  const int64_t m = a.dim(0), n = a.dim(1);
  const int64_t out_len = (axis == 0) ? n : m;
  const double divisor = take_mean ? static_cast<double>(axis == 0 ? m : n) : 1.0;

  Tensor out = Tensor::zeros({out_len});
  for (int64_t o = 0; o < out_len; ++o) {
    double acc = 0.0;
    if (axis == 0)
      for (int64_t i = 0; i < m; ++i) acc += a.d->value[i * n + o];
    else
      for (int64_t j = 0; j < n; ++j) acc += a.d->value[o * n + j];
    out.d->value[o] = static_cast<float>(acc / divisor);
  }

  if (grad_flows(g, a)) {
    int ia = g.track_input(a);
    g.add_node(name, {ia}, out, [ad = a.d, od = out.d, m, n, axis, divisor]() {
      ad->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          float dy = od->grad[axis == 0 ? j : i];
          ad->grad[i * n + j] += static_cast<float>(dy / divisor);
        }
    });
  }
  return out;
}

}  // namespace

Tensor sum_axis(Graph& g, const Tensor& a, int axis) {
  return axis_reduce(g, a, axis, false, "sum_axis");
}

Tensor mean_axis(Graph& g, const Tensor& a, int axis) {
  return axis_reduce(g, a, axis, true, "mean_axis");
}

// ---------------------------------------------------------------------------
// slicing / concatenation / lookup
// ---------------------------------------------------------------------------

Tensor slice_rows(Graph& g, const Tensor& a, int64_t r0, int64_t nrows) {
  check_2d(a, "slice_rows");
  const int64_t m = a.dim(0), n = a.dim(1);
  if (r0 < 0 || nrows < 1 || r0 + nrows > m)
    throw Error(ErrorCategory::internal,
                "slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r0 + nrows) +
                    ") out of bounds for " + shape_str(a.shape()));
  Tensor out = Tensor::zeros({nrows, n});
  std::memcpy(out.d->value.data(), a.d->value.data() + r0 * n,
              static_cast<size_t>(nrows * n) * sizeof(float));

  if (grad_flows(g, a)) {
    int ia = g.track_input(a);
    g.add_node("slice_rows", {ia}, out, [ad = a.d, od = out.d, r0, nrows, n]() {
      ad->ensure_grad();
      for (int64_t i = 0; i < nrows; ++i)
        for (int64_t j = 0; j < n; ++j) ad->grad[(r0 + i) * n + j] += od->grad[i * n + j];
    });
  }
  return out;
}

Tensor slice_cols(Graph& g, const Tensor& a, int64_t c0, int64_t ncols) {
  check_2d(a, "slice_cols");
  const int64_t m = a.dim(0), n = a.dim(1);
  if (c0 < 0 || ncols < 1 || c0 + ncols > n)
    throw Error(ErrorCategory::internal,
                "slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c0 + ncols) +
                    ") out of bounds for " + shape_str(a.shape()));
  Tensor out = Tensor::zeros({m, ncols});
  for (int64_t i = 0; i < m; ++i)
    std::memcpy(out.d->value.data() + i * ncols, a.d->value.data() + i * n + c0,
                static_cast<size_t>(ncols) * sizeof(float));

  if (grad_flows(g, a)) {
    int ia = g.track_input(a);
    g.add_node("slice_cols", {ia}, out, [ad = a.d, od = out.d, m, n, c0, ncols]() {
      ad->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < ncols; ++j) ad->grad[i * n + c0 + j] += od->grad[i * ncols + j];
    });
  }
  return out;
}

Tensor concat_cols(Graph& g, std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorCategory::internal, "concat_cols: no inputs");
  const int64_t m = parts[0].dim(0);
  int64_t total = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_cols");
    if (p.dim(0) != m) shape_error("concat_cols: row counts differ", parts[0].shape(), p.shape());
    total += p.dim(1);
  }
  Tensor out = Tensor::zeros({m, total});
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t w = p.dim(1);
    for (int64_t i = 0; i < m; ++i)
      std::memcpy(out.d->value.data() + i * total + off, p.d->value.data() + i * w,
                  static_cast<size_t>(w) * sizeof(float));
    off += w;
  }

  bool any = false;
  for (const Tensor& p : parts) any = any || grad_flows(g, p);
  if (any) {
    std::vector<int> ids;
    std::vector<std::shared_ptr<TensorData>> datas;
    std::vector<bool> flows;
    for (const Tensor& p : parts) {
      bool f = grad_flows(g, p);
      ids.push_back(f ? g.track_input(p) : -1);
      datas.push_back(p.d);
      flows.push_back(f);
    }
    g.add_node("concat_cols", ids, out, [datas, flows, od = out.d, m, total]() {
      int64_t off = 0;
      for (size_t pi = 0; pi < datas.size(); ++pi) {
        const int64_t w = static_cast<int64_t>(datas[pi]->value.size()) / m;
        if (flows[pi]) {
          datas[pi]->ensure_grad();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j)
              datas[pi]->grad[i * w + j] += od->grad[i * total + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor embedding_lookup(Graph& g, const Tensor& table, std::span<const int32_t> ids) {
  check_2d(table, "embedding_lookup");
  const int64_t v = table.dim(0), d = table.dim(1);
  const int64_t t = static_cast<int64_t>(ids.size());
  for (int64_t i = 0; i < t; ++i)
    if (ids[i] < 0 || ids[i] >= v)
      throw Error(ErrorCategory::internal,
                  "embedding_lookup: id " + std::to_string(ids[i]) + " at position " +
                      std::to_string(i) + " outside table of size " + std::to_string(v));

  Tensor out = Tensor::zeros({t, d});
  for (int64_t i = 0; i < t; ++i)
    std::memcpy(out.d->value.data() + i * d, table.d->value.data() + ids[i] * d,
                static_cast<size_t>(d) * sizeof(float));

  if (grad_flows(g, table)) {
    int it = g.track_input(table);
    std::vector<int32_t> idv(ids.begin(), ids.end());
    g.add_node("embedding_lookup", {it}, out,
               [td = table.d, od = out.d, idv = std::move(idv), d]() {
                 td->ensure_grad();
                 for (size_t i = 0; i < idv.size(); ++i)
                   for (int64_t j = 0; j < d; ++j)
                     td->grad[idv[i] * d + j] += od->grad[i * d + j];
               });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------------

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  check_2d(x, "layer_norm");
  const int64_t m = x.dim(0), n = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != n) shape_error("layer_norm: gain", x.shape(), gain.shape());
  if (shift.rank() != 1 || shift.dim(0) != n)
    shape_error("layer_norm: shift", x.shape(), shift.shape());

  Tensor out = Tensor::zeros({m, n});
  auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(m * n));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(m));

  for (int64_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += x.d->value[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double c = x.d->value[i * n + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (int64_t j = 0; j < n; ++j) {
      float xh = static_cast<float>((x.d->value[i * n + j] - mu) * inv);
      (*xhat)[i * n + j] = xh;
      out.d->value[i * n + j] = xh * gain.d->value[j] + shift.d->value[j];
    }
  }

  if (grad_flows(g, x) || grad_flows(g, gain) || grad_flows(g, shift)) {
    bool fx = grad_flows(g, x), fg = grad_flows(g, gain), fs = grad_flows(g, shift);
    int ix = fx ? g.track_input(x) : -1;
    int ig = fg ? g.track_input(gain) : -1;
    int is = fs ? g.track_input(shift) : -1;
    g.add_node("layer_norm", {ix, ig, is}, out,
               [xd = x.d, gd = gain.d, sd = shift.d, od = out.d, xhat, inv_std, m, n, fx, fg, fs]() {
                 if (fg) gd->ensure_grad();
                 if (fs) sd->ensure_grad();
                 if (fx) xd->ensure_grad();
                 for (int64_t i = 0; i < m; ++i) {
                   double s1 = 0.0, s2 = 0.0;  // sum(g*dy), sum(g*dy*xhat)
                   for (int64_t j = 0; j < n; ++j) {
                     double gdy = static_cast<double>(gd->value[j]) * od->grad[i * n + j];
                     s1 += gdy;
                     s2 += gdy * (*xhat)[i * n + j];
                   }
                   for (int64_t j = 0; j < n; ++j) {
                     double dy = od->grad[i * n + j];
                     double xh = (*xhat)[i * n + j];
                     if (fg) gd->grad[j] += static_cast<float>(dy * xh);
                     if (fs) sd->grad[j] += static_cast<float>(dy);
                     if (fx) {
                       double gdy = static_cast<double>(gd->value[j]) * dy;
                       xd->grad[i * n + j] += static_cast<float>(
                           (*inv_std)[i] *
                           (gdy - s1 / static_cast<double>(n) - xh * s2 / static_cast<double>(n)));
                     }
                   }
                 }
               });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

Tensor causal_softmax(Graph& g, const Tensor& scores) {
  check_2d(scores, "causal_softmax");
  if (scores.dim(0) != scores.dim(1))
    throw Error(ErrorCategory::internal,
                "causal_softmax: expected square matrix, got " + shape_str(scores.shape()));
  const int64_t t = scores.dim(0);

  Tensor out = Tensor::zeros({t, t});
  for (int64_t i = 0; i < t; ++i) {
    float mx = scores.d->value[i * t];
    for (int64_t j = 1; j <= i; ++j) mx = std::max(mx, scores.d->value[i * t + j]);
    double denom = 0.0;
    for (int64_t j = 0; j <= i; ++j)
      denom += std::exp(static_cast<double>(scores.d->value[i * t + j]) - mx);
    for (int64_t j = 0; j <= i; ++j)
      out.d->value[i * t + j] = static_cast<float>(
          std::exp(static_cast<double>(scores.d->value[i * t + j]) - mx) / denom);
  }

  if (grad_flows(g, scores)) {
    int is = g.track_input(scores);
    g.add_node("causal_softmax", {is}, out, [sd = scores.d, od = out.d, t]() {
      sd->ensure_grad();
      for (int64_t i = 0; i < t; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j <= i; ++j)
          dot += static_cast<double>(od->grad[i * t + j]) * od->value[i * t + j];
        for (int64_t j = 0; j <= i; ++j)
          sd->grad[i * t + j] += static_cast<float>(
              od->value[i * t + j] * (static_cast<double>(od->grad[i * t + j]) - dot));
      }
    });
  }
  return out;
}

namespace {

// Shared kernel for cross entropy and picked log-prob. Returns per-row
// log-sum-exp values for the backward pass.
struct PickedRows {
  double total = 0.0;  // sum over masked rows of (z[target] - lse)
  int64_t count = 0;
  std::shared_ptr<std::vector<double>> lse;
};

PickedRows picked_rows(const Tensor& logits, std::span<const int32_t> targets,
                       std::span<const uint8_t> mask, const char* op) {
  check_2d(logits, op);
  const int64_t t = logits.dim(0), v = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != t || static_cast<int64_t>(mask.size()) != t)
    throw Error(ErrorCategory::internal,
                std::string(op) + ": targets/mask length " + std::to_string(targets.size()) + "/" +
                    std::to_string(mask.size()) + " does not match " + std::to_string(t) + " rows");

  PickedRows r;
  r.lse = std::make_shared<std::vector<double>>(static_cast<size_t>(t), 0.0);
  for (int64_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || targets[i] >= v)
      throw Error(ErrorCategory::internal,
                  std::string(op) + ": target " + std::to_string(targets[i]) + " at position " +
                      std::to_string(i) + " outside vocab of size " + std::to_string(v));
    const float* row = logits.d->value.data() + i * v;
    float mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < v; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    double lse = static_cast<double>(mx) + std::log(denom);
    (*r.lse)[i] = lse;
    r.total += static_cast<double>(row[targets[i]]) - lse;
    r.count += 1;
  }
  return r;
}

}  // namespace

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, std::span<const int32_t> targets,
                             std::span<const uint8_t> mask) {
  PickedRows r = picked_rows(logits, targets, mask, "softmax_cross_entropy");
  if (r.count == 0)
    throw Error(ErrorCategory::data, "softmax_cross_entropy: empty loss (all positions masked)");
  Tensor out = Tensor::scalar(-r.total / static_cast<double>(r.count));

  if (grad_flows(g, logits)) {
    int il = g.track_input(logits);
    const int64_t v = logits.dim(1);
    std::vector<int32_t> tv(targets.begin(), targets.end());
    std::vector<uint8_t> mv(mask.begin(), mask.end());
    g.add_node("softmax_cross_entropy", {il}, out,
               [ld = logits.d, od = out.d, lse = r.lse, tv = std::move(tv), mv = std::move(mv), v,
                count = r.count]() {
                 ld->ensure_grad();
                 const double coef = static_cast<double>(od->grad[0]) / static_cast<double>(count);
                 for (size_t i = 0; i < mv.size(); ++i) {
                   if (!mv[i]) continue;
                   const float* row = ld->value.data() + i * v;
                   float* grow = ld->grad.data() + i * v;
                   for (int64_t j = 0; j < v; ++j) {
                     double p = std::exp(static_cast<double>(row[j]) - (*lse)[i]);
                     double ind = (j == tv[i]) ? 1.0 : 0.0;
                     grow[j] += static_cast<float>(coef * (p - ind));
                   }
                 }
               });
  }
  return out;
}

Tensor picked_logprob_sum(Graph& g, const Tensor& logits, std::span<const int32_t> targets,
                          std::span<const uint8_t> mask) {
  PickedRows r = picked_rows(logits, targets, mask, "picked_logprob_sum");
  Tensor out = Tensor::scalar(r.total);

  if (grad_flows(g, logits)) {
    int il = g.track_input(logits);
    const int64_t v = logits.dim(1);
    std::vector<int32_t> tv(targets.begin(), targets.end());
    std::vector<uint8_t> mv(mask.begin(), mask.end());
    g.add_node("picked_logprob_sum", {il}, out,
               [ld = logits.d, od = out.d, lse = r.lse, tv = std::move(tv), mv = std::move(mv),
                v]() {
                 ld->ensure_grad();
                 const double coef = static_cast<double>(od->grad[0]);
                 for (size_t i = 0; i < mv.size(); ++i) {
                   if (!mv[i]) continue;
                   const float* row = ld->value.data() + i * v;
                   float* grow = ld->grad.data() + i * v;
                   for (int64_t j = 0; j < v; ++j) {
                     double p = std::exp(static_cast<double>(row[j]) - (*lse)[i]);
                     double ind = (j == tv[i]) ? 1.0 : 0.0;
                     grow[j] += static_cast<float>(coef * (ind - p));
                   }
                 }
               });
  }
  return out;
}

}  // namespace ptlab
