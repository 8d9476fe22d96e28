#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "blindsweep/nn/tensor.hpp"

namespace blindsweep::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Ordered by insertion; addresses are stable so graphs and optimizers can hold pointers.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ArgumentError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->grad = Tensor<T>(value.shape());
    p->value = std::move(value);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter: " + name);
    return *params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter: " + name);
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  // Copy values from a set with identical names and shapes, converting precision.
  template <typename U>
  void assign_from(const ParameterSet<U>& other) {
    for (auto& p : params_) {
      const auto& src = other.get(p->name);
      if (src.value.shape() != p->value.shape())
        throw ShapeError("parameter " + p->name + " shape " + src.value.shape().str() +
                         " does not match " + p->value.shape().str());
      p->value = src.value.template cast<T>();
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

struct Var {
  int id = -1;
  std::uint64_t graph = 0;
};

// Tape for reverse-mode differentiation. Nodes are appended in evaluation order,
// so reverse insertion order is a valid topological order for the backward sweep.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& out_grad)>;

  explicit Graph(bool record_gradients = true)
      : serial_(next_serial()), record_(record_gradients) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor<T> value) { return push(std::move(value), nullptr, nullptr, false, {}); }

  // Leaf whose gradient is tracked (inputs under test, gradient checks).
  Var variable(Tensor<T> value) { return push(std::move(value), nullptr, nullptr, record_, {}); }

  // Binds a parameter by reference; its gradient is added to `p.grad` on backward().
  Var param(Parameter<T>& p) { return push(Tensor<T>(), &p.value, &p, record_, {}); }

  // Non-owning constant; `value` must outlive the graph.
  Var view(const Tensor<T>& value) { return push(Tensor<T>(), &value, nullptr, false, {}); }

  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward fn) {
    bool needs = false;
    for (Var v : inputs) needs = needs || requires_grad(v);
    if (!needs || !record_) return push(std::move(value), nullptr, nullptr, false, {});
    return push(std::move(value), nullptr, nullptr, true, std::move(fn));
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = node(v);
    return n.external ? *n.external : n.own;
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient of the last backward() loss with respect to `v` (zeros if unreached).
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    if (!n.requires_grad)
      throw UsageError("variable " + std::to_string(v.id) + " does not track gradients");
    if (!n.has_grad) return Tensor<T>(value(v).shape());
    return n.grad;
  }

  // Zero-initialized on first touch; only valid for gradient-tracking nodes.
  Tensor<T>& grad_buffer(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
      n.grad = Tensor<T>(value(v).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  void accumulate(Var v, const Tensor<T>& g) {
    if (!requires_grad(v)) return;
    grad_buffer(v) += g;
  }

  void backward(Var loss) {
    const Node& ln = node(loss);
    if (value(loss).size() != 1)
      throw UsageError("backward() needs a scalar loss, got shape " + value(loss).shape().str());
    if (!ln.requires_grad) throw UsageError("loss does not depend on any tracked variable");
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor<T>();
    }
    grad_buffer(loss).fill(T(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* external = nullptr;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    Tensor<T> grad;
  };

  static std::uint64_t next_serial() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  Var push(Tensor<T> value, const Tensor<T>* ext, Parameter<T>* p, bool tracked,
           Backward fn) {
    Node n;
    n.own = std::move(value);
    n.external = ext;
    n.param = p;
    n.requires_grad = tracked;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1, serial_};
  }

  const Node& node(Var v) const {
    if (v.graph != serial_ || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw UsageError("variable is not part of this recorded graph");
    return nodes_[v.id];
  }
  Node& node(Var v) {
    return const_cast<Node&>(static_cast<const Graph*>(this)->node(v));
  }

  std::uint64_t serial_;
  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace blindsweep::nn
