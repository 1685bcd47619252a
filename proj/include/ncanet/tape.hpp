#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>

#include "ncanet/errors.hpp"
#include "ncanet/tensor.hpp"

namespace ncanet {

template <typename T>
class GradTape;

// Handle to a value recorded on a GradTape. Cheap to copy; only valid while
// the owning tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(GradTape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  GradTape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  const Tensor<T>& grad() const { return tape_->grad(id_); }

 private:
  GradTape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of executed ops. Each op stores its output value and a
// closure that pushes the output gradient into its inputs. backward() walks
// the record in reverse, visiting every node exactly once.
//
// A tape built with recording=false stores values only (inference mode).
// Single writer: build, run backward, and read gradients from one thread.
template <typename T>
class GradTape {
 public:
  using Backward = std::function<void(GradTape&, const Tensor<T>& out_grad)>;

  explicit GradTape(bool recording = true) : recording_(recording) {}
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    check_finite("leaf", value);
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && recording_;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Appends an op result. The backward closure is kept only when recording
  // and at least one input participates in differentiation. op must outlive
  // the tape (a string literal).
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward) {
    check_finite(op, value);
    bool needs = false;
    for (const Var<T>& in : inputs) {
      if (in.valid() && &in.tape() != this)
        throw std::logic_error(std::string(op) + ": input belongs to another tape");
      needs = needs || (in.valid() && nodes_[in.id()].requires_grad);
    }
    Node n;
    n.value = std::move(value);
    n.op = op;
    if (inputs.size() > 0 && inputs.begin()->valid()) n.first_input = inputs.begin()->id();
    n.requires_grad = needs && recording_;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  // Op name ("leaf" for leaves) and the id of its first input, or npos.
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t first_input(std::size_t id) const { return nodes_.at(id).first_input; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  const Tensor<T>& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.empty())
      throw std::logic_error("no gradient stored for tape node " + std::to_string(id));
    return n.grad;
  }

  // Gradient accumulator for an input, zero-initialized on first use.
  Tensor<T>& grad_acc(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
  // Intermediate gradients are released once consumed; leaf gradients stay.
  void backward(Var<T> root) {
    if (root.value().numel() != 1)
      throw ShapeError("backward requires a scalar root, got shape " + root.shape().str());
    if (consumed_) throw std::logic_error("backward already run on this tape");
    consumed_ = true;
    if (!recording_) return;
    grad_acc(root.id())[0] = T(1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        n.backward(*this, n.grad);
        n.backward = nullptr;
      }
      if (!n.is_leaf) n.grad = Tensor<T>();
    }
    for (Node& n : nodes_)
      if (n.is_leaf && n.requires_grad && n.grad.empty())
        n.grad = Tensor<T>::zeros(n.value.shape());
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
    bool is_leaf = false;
    std::string_view op = "leaf";
    std::size_t first_input = static_cast<std::size_t>(-1);
  };

  static void check_finite(std::string_view op, const Tensor<T>& v) {
    if (!v.all_finite())
      throw NumericError(std::string(op) + " produced a non-finite value (shape " +
                         v.shape().str() + ")");
  }

  std::deque<Node> nodes_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace ncanet
