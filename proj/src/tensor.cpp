#include "spurnet/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace spurnet {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

using NodePtr = std::shared_ptr<detail::Node>;

NodePtr new_node(Shape shape, std::vector<double> value, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  if (numel_of(n->shape) != n->value.size())
    throw ShapeError("tensor: shape does not match data length");
  return n;
}

Tensor make_op(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
               std::function<void(detail::Node&)> bwd) {
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p->requires_grad) needs_grad = true;
  }
  auto n = new_node(std::move(shape), std::move(value), needs_grad);
  if (needs_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(bwd);
  }
  return Tensor::wrap(std::move(n));
}

void check_2d(const Tensor& t, const char* what) {
  if (t.shape().size() > 2) throw ShapeError(std::string(what) + ": rank > 2 not supported");
}

}  // namespace

namespace detail {
std::vector<double>& grad_buffer(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}
}  // namespace detail

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  return Tensor(new_node(std::move(shape), std::move(data), false));
}

Tensor Tensor::constant(const Matrix& m) {
  return Tensor(new_node({m.rows, m.cols}, m.data, false));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  return Tensor(new_node(std::move(shape), std::move(data), true));
}

Tensor Tensor::scalar(double v) { return Tensor(new_node({}, {v}, false)); }

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = numel_of(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0), false));
}

Tensor Tensor::full(Shape shape, double v) {
  std::size_t n = numel_of(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, v), false));
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), k2 = b.rows(), m = b.cols();
  if (k != k2) throw ShapeError("matmul: inner dimensions differ");
  std::vector<double> out(n * m);
  {
    ConstMap A(a.value().data(), n, k), B(b.value().data(), k, m);
    MutMap(out.data(), n, m).noalias() = A * B;
  }
  auto pa = a.node(), pb = b.node();
  return make_op({n, m}, std::move(out), {pa, pb}, [pa, pb, n, k, m](detail::Node& self) {
    ConstMap G(self.grad.data(), n, m);
    if (pa->requires_grad) {
      ConstMap B(pb->value.data(), k, m);
      MutMap(detail::grad_buffer(*pa).data(), n, k).noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      ConstMap A(pa->value.data(), n, k);
      MutMap(detail::grad_buffer(*pb).data(), k, m).noalias() += A.transpose() * G;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (k != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  std::vector<double> out(n * m);
  {
    ConstMap A(a.value().data(), n, k), B(b.value().data(), m, k);
    MutMap(out.data(), n, m).noalias() = A * B.transpose();
  }
  auto pa = a.node(), pb = b.node();
  return make_op({n, m}, std::move(out), {pa, pb}, [pa, pb, n, k, m](detail::Node& self) {
    ConstMap G(self.grad.data(), n, m);
    if (pa->requires_grad) {
      ConstMap B(pb->value.data(), m, k);
      MutMap(detail::grad_buffer(*pa).data(), n, k).noalias() += G * B;
    }
    if (pb->requires_grad) {
      ConstMap A(pa->value.data(), n, k);
      MutMap(detail::grad_buffer(*pb).data(), m, k).noalias() += G.transpose() * A;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shapes differ");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad) {
      auto& g = detail::grad_buffer(*pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = detail::grad_buffer(*pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("sub: shapes differ");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad) {
      auto& g = detail::grad_buffer(*pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = detail::grad_buffer(*pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: shapes differ");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad) {
      auto& g = detail::grad_buffer(*pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = detail::grad_buffer(*pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  check_2d(a, "add_rowvec");
  const std::size_t n = a.rows(), m = a.cols();
  if (row.numel() != m) throw ShapeError("add_rowvec: row length does not match columns");
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = a.value()[r * m + c] + row.value()[c];
  auto pa = a.node(), pr = row.node();
  return make_op(a.shape(), std::move(out), {pa, pr}, [pa, pr, n, m](detail::Node& self) {
    if (pa->requires_grad) {
      auto& g = detail::grad_buffer(*pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pr->requires_grad) {
      auto& g = detail::grad_buffer(*pr);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[c] += self.grad[r * m + c];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa, c](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (self.value[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.value()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa}, [pa](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  auto pa = a.node();
  return make_op({}, {s}, {pa}, [pa](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.value()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  auto pa = a.node();
  return make_op({}, {s * inv}, {pa}, [pa, inv](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv;
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  check_2d(a, "gather_rows");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(idx.size() * m);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw ValueError("gather_rows: index out of range");
    for (std::size_t c = 0; c < m; ++c) out[i * m + c] = a.value()[idx[i] * m + c];
  }
  auto pa = a.node();
  auto indices = idx;
  return make_op({idx.size(), m}, std::move(out), {pa}, [pa, indices, m](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t c = 0; c < m; ++c) g[indices[i] * m + c] += self.grad[i * m + c];
  });
}

Tensor hcat(const Tensor& a, const Tensor& b) {
  check_2d(a, "hcat");
  check_2d(b, "hcat");
  const std::size_t n = a.rows();
  if (b.rows() != n) throw ShapeError("hcat: row counts differ");
  const std::size_t ca = a.cols(), cb = b.cols();
  std::vector<double> out(n * (ca + cb));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = a.value()[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[r * (ca + cb) + ca + c] = b.value()[r * cb + c];
  }
  auto pa = a.node(), pb = b.node();
  return make_op({n, ca + cb}, std::move(out), {pa, pb}, [pa, pb, n, ca, cb](detail::Node& self) {
    if (pa->requires_grad) {
      auto& g = detail::grad_buffer(*pa);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += self.grad[r * (ca + cb) + c];
    }
    if (pb->requires_grad) {
      auto& g = detail::grad_buffer(*pb);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
    }
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t d = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  std::vector<NodePtr> parents;
  for (const auto& r : rows) {
    if (r.numel() != d) throw ShapeError("stack_rows: rows differ in width");
    out.insert(out.end(), r.value().begin(), r.value().end());
    parents.push_back(r.node());
  }
  auto ps = parents;
  return make_op({rows.size(), d}, std::move(out), std::move(parents),
                 [ps, d](detail::Node& self) {
                   for (std::size_t i = 0; i < ps.size(); ++i) {
                     if (!ps[i]->requires_grad) continue;
                     auto& g = detail::grad_buffer(*ps[i]);
                     for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[i * d + c];
                   }
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) throw ShapeError("reshape: element count differs");
  auto pa = a.node();
  return make_op(std::move(shape), a.value(), {pa}, [pa](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor logsumexp(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("logsumexp: empty tensor");
  double mx = a.value()[0];
  for (double v : a.value()) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : a.value()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  auto pa = a.node();
  return make_op({}, {lse}, {pa}, [pa, lse](detail::Node& self) {
    auto& g = detail::grad_buffer(*pa);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * std::exp(pa->value[i] - lse);
  });
}

Tensor l2_normalize(const Tensor& a, double epsilon) {
  check_2d(a, "l2_normalize");
  if (epsilon <= 0.0) throw ValueError("l2_normalize: epsilon must be positive");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(a.numel());
  std::vector<double> denom(n);
  std::vector<char> clamped(n);
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < m; ++c) sq += a.value()[r * m + c] * a.value()[r * m + c];
    double norm = std::sqrt(sq);
    clamped[r] = norm < epsilon;
    denom[r] = clamped[r] ? epsilon : norm;
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = a.value()[r * m + c] / denom[r];
  }
  auto pa = a.node();
  return make_op(a.shape(), std::move(out), {pa},
                 [pa, denom, clamped, n, m](detail::Node& self) {
                   auto& g = detail::grad_buffer(*pa);
                   for (std::size_t r = 0; r < n; ++r) {
                     if (clamped[r]) {
                       // norm below epsilon: y = v / const
                       for (std::size_t c = 0; c < m; ++c)
                         g[r * m + c] += self.grad[r * m + c] / denom[r];
                     } else {
                       // y = v/|v| : dv = (dy - y (y . dy)) / |v|
                       double dot = 0.0;
                       for (std::size_t c = 0; c < m; ++c)
                         dot += self.value[r * m + c] * self.grad[r * m + c];
                       for (std::size_t c = 0; c < m; ++c)
                         g[r * m + c] +=
                             (self.grad[r * m + c] - self.value[r * m + c] * dot) / denom[r];
                     }
                   }
                 });
}

Tensor stop_gradient(const Tensor& a) { return Tensor::constant(a.shape(), a.value()); }

Tensor greater_than(const Tensor& a, double thr) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > thr ? 1.0 : 0.0;
  return Tensor::constant(a.shape(), std::move(out));
}

Tensor straight_through_threshold(const Tensor& s, double gamma) {
  std::vector<double> out(s.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.value()[i] > gamma ? 1.0 : 0.0;
  auto ps = s.node();
  return make_op(s.shape(), std::move(out), {ps}, [ps](detail::Node& self) {
    auto& g = detail::grad_buffer(*ps);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2) throw ShapeError("cross_entropy: logits must be 2-D");
  const std::size_t n = logits.rows(), C = logits.cols();
  if (labels.size() != n) throw ShapeError("cross_entropy: label count does not match rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw ValueError("cross_entropy: label out of range");
  // softmax probabilities cached for the backward pass
  std::vector<double> probs(n * C);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double mx = logits.value()[r * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, logits.value()[r * C + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      probs[r * C + c] = std::exp(logits.value()[r * C + c] - mx);
      s += probs[r * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) probs[r * C + c] /= s;
    loss += mx + std::log(s) - logits.value()[r * C + static_cast<std::size_t>(labels[r])];
  }
  loss /= static_cast<double>(n);
  auto pl = logits.node();
  auto ys = labels;
  return make_op({}, {loss}, {pl}, [pl, probs, ys, n, C](detail::Node& self) {
    auto& g = detail::grad_buffer(*pl);
    const double inv = self.grad[0] / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        double delta = (static_cast<std::size_t>(ys[r]) == c) ? 1.0 : 0.0;
        g[r * C + c] += inv * (probs[r * C + c] - delta);
      }
  });
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ValueError("backward: undefined tensor");
  if (loss.numel() != 1) throw ValueError("backward: loss must be scalar");
  detail::Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // iterative post-order DFS; traversal order is fixed by construction order
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  detail::grad_buffer(*root);
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

}  // namespace spurnet
