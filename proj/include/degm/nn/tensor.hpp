#pragma once

// Dense row-major tensors of doubles with reverse-mode differentiation.
//
// Every op that sees at least one input with requires_grad() (while grad mode
// is enabled) records its inputs and a backward closure on the result. The
// recorded graph is the tape: Tensor::backward() walks it in reverse
// topological order (post-order DFS over inputs in argument order, so the
// accumulation order is fixed) and then releases it.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace degm::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first backward reaches it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Tensor {
 public:
  /// Scalar zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false);

  [[nodiscard]] const Shape& shape() const;
  [[nodiscard]] std::size_t rank() const { return shape().size(); }
  [[nodiscard]] std::size_t numel() const;
  /// Leading extent; 1 for scalars.
  [[nodiscard]] std::size_t rows() const;
  /// Product of all trailing extents; 1 for rank-0 and rank-1 tensors.
  [[nodiscard]] std::size_t cols() const;

  [[nodiscard]] std::span<const double> data() const;
  /// Mutable view of the values. Only for leaves (parameters, inputs).
  [[nodiscard]] std::span<double> mutable_data();
  /// Empty span when no gradient has been accumulated.
  [[nodiscard]] std::span<const double> grad() const;
  [[nodiscard]] bool has_grad() const;
  void zero_grad();

  [[nodiscard]] bool requires_grad() const;
  void set_requires_grad(bool on);

  [[nodiscard]] double item() const;
  [[nodiscard]] double at(std::size_t flat_index) const { return data()[flat_index]; }

  /// Same values, no history, no gradient, independent storage.
  [[nodiscard]] Tensor detach() const;
  /// Row slice [begin, end) along the leading axis, as a new constant tensor.
  [[nodiscard]] Tensor slice_rows(std::size_t begin, std::size_t end) const;

  /// Populates grad on every requires_grad tensor reachable from this scalar,
  /// then clears the recorded history.
  void backward() const;

  [[nodiscard]] bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  [[nodiscard]] const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// RAII switch that disables history recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- ops -------------------------------------------------------------------

/// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [n,m] + [m] broadcast over rows.
Tensor add_row_vector(const Tensor& a, const Tensor& row);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [n, ...] -> [n], summing every trailing element of each row.
Tensor row_sum(const Tensor& a);
/// [n,k] -> [n]
Tensor row_mean(const Tensor& a);
/// Max-shifted log-sum-exp over each row: [n,k] -> [n].
Tensor row_logsumexp(const Tensor& a);
/// [n,m] -> [n*k, m], each row repeated k times consecutively.
Tensor repeat_rows(const Tensor& a, std::size_t k);
Tensor reshape(const Tensor& a, Shape shape);

/// Per-row Bernoulli log-likelihood sum_i t_i log p_i + (1-t_i) log(1-p_i)
/// with p clamped to [clamp, 1-clamp]; zero gradient where the clamp is active.
/// `target` is treated as a constant.
Tensor bernoulli_loglik_rows(const Tensor& probs, const Tensor& target, double clamp);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

bool all_finite(std::span<const double> values);

}  // namespace degm::nn
