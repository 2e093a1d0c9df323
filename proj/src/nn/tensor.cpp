#include "degm/nn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "degm/nn/errors.hpp"

namespace degm::nn {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// Builds the result node and, when any input tracks gradients, records the
// inputs plus the backward closure.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor& t : inputs) node->inputs.push_back(t.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

detail::Node& input(detail::Node& self, std::size_t i) { return *self.inputs[i]; }

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_result(a.shape(), std::move(out), {a}, [df](detail::Node& self) {
    detail::Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(in.data[i], self.data[i]);
  });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }
std::size_t Tensor::rows() const { return rank() == 0 ? 1 : shape()[0]; }
std::size_t Tensor::cols() const { return numel() / rows(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (node_->backward_fn) throw ContractError("mutable_data() on a non-leaf tensor");
  return node_->data;
}

std::span<const double> Tensor::grad() const { return node_->grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (node_->backward_fn) throw ContractError("set_requires_grad() on a non-leaf tensor");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin >= end || end > rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(shape()));
  }
  const std::size_t width = numel() / rows();
  Shape s = shape();
  s[0] = end - begin;
  return Tensor(std::move(s),
                std::vector<double>(node_->data.begin() + static_cast<std::ptrdiff_t>(begin * width),
                                    node_->data.begin() + static_cast<std::ptrdiff_t>(end * width)));
}

void Tensor::backward() const {
  if (rank() > 1 || numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!std::isfinite(node_->data[0])) throw NumericError("backward() on a non-finite loss");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; inputs visited in argument order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) {
      node->grad_buffer();
      node->backward_fn(*node);
    }
  }
  // Release the tape. Interior nodes keep their values but drop history.
  for (detail::Node* node : order) {
    if (node->backward_fn) {
      node->backward_fn = nullptr;
      node->inputs.clear();
      node->requires_grad = false;
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(n * m);
  const auto ni = static_cast<Eigen::Index>(n), ki = static_cast<Eigen::Index>(k),
             mi = static_cast<Eigen::Index>(m);
  MutMap(out.data(), ni, mi).noalias() = ConstMap(a.data().data(), ni, ki) * ConstMap(b.data().data(), ki, mi);
  return make_result(Shape{n, m}, std::move(out), {a, b}, [ni, ki, mi](detail::Node& self) {
    ConstMap dout(self.grad.data(), ni, mi);
    detail::Node& lhs = input(self, 0);
    detail::Node& rhs = input(self, 1);
    if (lhs.requires_grad) {
      MutMap(lhs.grad_buffer().data(), ni, ki).noalias() +=
          dout * ConstMap(rhs.data.data(), ki, mi).transpose();
    }
    if (rhs.requires_grad) {
      MutMap(rhs.grad_buffer().data(), ki, mi).noalias() +=
          ConstMap(lhs.data.data(), ni, ki).transpose() * dout;
    }
  });
}

Tensor add_row_vector(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "add_row_vector");
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  if (row.numel() != m || row.rank() != 1) {
    throw ShapeError("add_row_vector: row " + shape_str(row.shape()) + " does not match " +
                     shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto r = row.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += r[j];
  return make_result(a.shape(), std::move(out), {a, row}, [n, m](detail::Node& self) {
    detail::Node& lhs = input(self, 0);
    detail::Node& rhs = input(self, 1);
    if (lhs.requires_grad) {
      auto& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (rhs.requires_grad) {
      auto& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      detail::Node& in = input(self, k);
      if (!in.requires_grad) continue;
      auto& g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& lhs = input(self, 0);
    detail::Node& rhs = input(self, 1);
    if (lhs.requires_grad) {
      auto& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (rhs.requires_grad) {
      auto& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& lhs = input(self, 0);
    detail::Node& rhs = input(self, 1);
    if (lhs.requires_grad) {
      auto& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * rhs.data[i];
    }
    if (rhs.requires_grad) {
      auto& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * lhs.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result(Shape{}, {total}, {a}, [](detail::Node& self) {
    detail::Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor row_sum(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("row_sum on a scalar");
  const std::size_t n = a.rows(), m = a.numel() / n;
  std::vector<double> out(n, 0.0);
  const auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += x[i * m + j];
    out[i] = s;
  }
  return make_result(Shape{n}, std::move(out), {a}, [n, m](detail::Node& self) {
    detail::Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i];
  });
}

Tensor row_mean(const Tensor& a) {
  require_rank(a, 2, "row_mean");
  return scale(row_sum(a), 1.0 / static_cast<double>(a.shape()[1]));
}

Tensor row_logsumexp(const Tensor& a) {
  require_rank(a, 2, "row_logsumexp");
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  const auto x = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * k;
    const double peak = *std::max_element(row, row + k);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(row[j] - peak);
    out[i] = peak + std::log(acc);
  }
  return make_result(Shape{n}, std::move(out), {a}, [n, k](detail::Node& self) {
    detail::Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j)
        g[i * k + j] += self.grad[i] * std::exp(in.data[i * k + j] - self.data[i]);
  });
}

Tensor repeat_rows(const Tensor& a, std::size_t k) {
  require_rank(a, 2, "repeat_rows");
  if (k == 0) throw ShapeError("repeat_rows: k must be positive");
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  std::vector<double> out(n * k * m);
  const auto x = a.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < k; ++r)
      std::copy_n(x.data() + i * m, m, out.data() + (i * k + r) * m);
  return make_result(Shape{n * k, m}, std::move(out), {a}, [n, k, m](detail::Node& self) {
    detail::Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[(i * k + r) * m + j];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](detail::Node& self) {
    detail::Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor bernoulli_loglik_rows(const Tensor& probs, const Tensor& target, double clamp) {
  require_same_shape(probs, target, "bernoulli_loglik_rows");
  if (probs.rank() == 0) throw ShapeError("bernoulli_loglik_rows on a scalar");
  const std::size_t n = probs.rows(), m = probs.numel() / n;
  const auto p = probs.data();
  const auto t = target.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double q = std::clamp(p[i * m + j], clamp, 1.0 - clamp);
      const double x = t[i * m + j];
      s += x * std::log(q) + (1.0 - x) * std::log1p(-q);
    }
    out[i] = s;
  }
  return make_result(Shape{n}, std::move(out), {probs, target},
                     [n, m, clamp](detail::Node& self) {
                       detail::Node& in = input(self, 0);
                       const detail::Node& tgt = input(self, 1);
                       if (!in.requires_grad) return;
                       auto& g = in.grad_buffer();
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < m; ++j) {
                           const double q = in.data[i * m + j];
                           if (q <= clamp || q >= 1.0 - clamp) continue;
                           const double x = tgt.data[i * m + j];
                           g[i * m + j] += self.grad[i] * (x / q - (1.0 - x) / (1.0 - q));
                         }
                       }
                     });
}

}  // namespace degm::nn
