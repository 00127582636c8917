#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "spurnet/error.hpp"
#include "spurnet/matrix.hpp"

namespace spurnet {

using Shape = std::vector<std::size_t>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::size_t numel() const { return value.size(); }
};

std::vector<double>& grad_buffer(Node& n);

}  // namespace detail

/// Whether newly created ops record the graph. Evaluation passes switch it
/// off with NoGradGuard so inference does not retain parents.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

/// Handle to a graph node. Copies share the node; graphs are rebuilt per
/// mini-batch while leaf tensors (parameters, constants) persist across
/// batches. A tensor detached from any graph is just shape + data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor constant(const Matrix& m);
  static Tensor param(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor wrap(std::shared_ptr<detail::Node> node);  // internal

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& value() const { return node_->value; }
  /// In-place mutation is only meaningful on leaves (optimizer updates).
  std::vector<double>& mutable_value() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  double item() const {
    if (numel() != 1) throw ShapeError("item(): tensor is not scalar");
    return node_->value[0];
  }

  Matrix to_matrix() const { return Matrix(rows(), cols(), node_->value); }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// ---- graph ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [n,k] x [k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [n,k] x [m,k]^T -> [n,m]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor add_rowvec(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx);
Tensor hcat(const Tensor& a, const Tensor& b);
Tensor stack_rows(const std::vector<Tensor>& rows);  // k tensors of width d -> [k,d]
Tensor reshape(const Tensor& a, Shape shape);
Tensor logsumexp(const Tensor& a);  // over all elements -> scalar

/// Rows divided by max(L2 norm, epsilon).
Tensor l2_normalize(const Tensor& a, double epsilon = 1e-12);

/// Identity forward, zero gradient upstream.
Tensor stop_gradient(const Tensor& a);

/// Elementwise indicator a > thr as a constant (no gradient path).
Tensor greater_than(const Tensor& a, double thr);

/// Hard threshold forward (exactly 0/1), identity backward. This realizes
/// the stop-gradient construction m = [1{s>g} - s]_stop + s with an exactly
/// binary forward value.
Tensor straight_through_threshold(const Tensor& s, double gamma);

/// Mean negative log softmax probability of the true class, stabilized by
/// row-max subtraction. logits: [n,C], labels in [0,C).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Reverse-mode sweep from a scalar loss; accumulates into .grad of every
/// node that requires grad. One sweep per freshly built graph.
void backward(const Tensor& loss);

}  // namespace spurnet
