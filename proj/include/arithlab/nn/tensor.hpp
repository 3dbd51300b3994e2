#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "arithlab/common/rng.hpp"

namespace arithlab::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{0});
  }
};

}  // namespace detail

// Value-semantic handle to a node in the computation tape. Ops defined in
// ops.hpp build the tape; backward() runs reverse-mode accumulation from a
// scalar root.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    node_->shape = std::move(shape);
    node_->value.assign(numel(node_->shape), T{0});
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<detail::Node<T>>();
    t.node_->shape = std::move(shape);
    if (values.size() != numel(t.node_->shape))
      throw std::invalid_argument("from_vector: element count does not match shape");
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor randn(Shape shape, rng::Rng& rng, T stddev, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    for (auto& v : t.node_->value) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }

  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }

  T* grad() {
    node_->ensure_grad();
    return node_->grad.data();
  }
  const std::vector<T>& grad_vec() const { return node_->grad; }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
  }

  T item() const {
    if (size() != 1) throw std::invalid_argument("item() needs a scalar tensor");
    return node_->value[0];
  }

  // Reverse-mode accumulation from this scalar. Grad buffers of reachable
  // nodes are zeroed first, so each backward() is an independent pass;
  // parameter grads are managed by the optimizer between steps.
  void backward() {
    if (size() != 1) throw std::invalid_argument("backward() needs a scalar root");
    std::vector<detail::Node<T>*> order;
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    std::vector<detail::Node<T>*> seen;
    auto mark = [&seen](detail::Node<T>* n) {
      for (auto* s : seen)
        if (s == n) return false;
      seen.push_back(n);
      return true;
    };
    // Iterative post-order DFS; graphs are small (hundreds of nodes).
    if (mark(node_.get())) stack.emplace_back(node_.get(), 0);
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        auto* p = n->parents[next++].get();
        if (p->requires_grad && mark(p)) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (auto* n : order) {
      if (n->requires_grad) {
        n->ensure_grad();
        std::fill(n->grad.begin(), n->grad.end(), T{0});
      }
    }
    node_->ensure_grad();
    node_->grad[0] = T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn();
    }
  }

  std::shared_ptr<detail::Node<T>> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const T v : t.values())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& what) {
  if (!all_finite(t)) throw std::runtime_error("non-finite values in " + what);
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace arithlab::nn
