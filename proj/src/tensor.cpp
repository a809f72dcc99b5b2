// SPDX-License-Identifier: Apache-2.0
#include "ptsc/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

PTSC_BEGIN_NAMESPACE

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::vector<Real>& detail::TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
  return grad;
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<Real>(shape_numel(shape), Real(0)), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_string(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(Real value) { return Tensor(Shape{1}, std::vector<Real>{value}); }

namespace {
const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw std::logic_error("tensor: use of an undefined tensor");
  return *impl;
}
}  // namespace

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for " +
                            shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const Real> Tensor::data() const { return checked(impl_).data; }

std::span<Real> Tensor::mutable_data() {
  checked(impl_);
  if (impl_->node) throw std::logic_error("tensor: values of an op result are immutable");
  return impl_->data;
}

Real Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("tensor: item() needs a single element");
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  checked(impl_);
  if (impl_->node) throw std::logic_error("tensor: requires_grad is fixed for op results");
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return checked(impl_).grad.size() == impl_->data.size(); }

std::span<const Real> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor: no gradient has been accumulated");
  return impl_->grad;
}

std::span<Real> Tensor::mutable_grad() {
  checked(impl_);
  return impl_->ensure_grad();
}

void Tensor::zero_grad() {
  checked(impl_);
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0));
}

bool Tensor::is_leaf() const { return checked(impl_).node == nullptr; }

std::string_view Tensor::op_name() const {
  const auto& impl = checked(impl_);
  return impl.node ? impl.node->op : std::string_view{};
}

void Tensor::backward() const {
  if (numel() != 1) throw std::invalid_argument("tensor: backward() needs a single-element root");

  // Post-order DFS gives a topological order of the recorded graph.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* tape = node->node.get();
    if (tape && next < tape->inputs.size()) {
      detail::TensorImpl* child = tape->inputs[next++].get();
      if (seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (auto* t : order) {
    if (t->requires_grad) t->ensure_grad();
  }
  impl_->ensure_grad()[0] += Real(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    if (t->node && t->node->backward) t->node->backward(t->grad);
  }
}

Tensor Tensor::detach() const {
  const auto& impl = checked(impl_);
  return Tensor(impl.shape, impl.data, false);
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool flag) { g_grad_enabled = flag; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

Tensor make_op_result(Shape shape, std::vector<Real> values, std::string_view op,
                      std::initializer_list<const Tensor*> inputs,
                      std::function<void(std::span<const Real>)> backward) {
  Tensor out(std::move(shape), std::move(values), false);
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const Tensor* in : inputs) any = any || (in && in->defined() && in->requires_grad());
  if (!any) return out;

  auto node = std::make_shared<detail::TapeNode>();
  node->op = op;
  for (const Tensor* in : inputs) {
    if (in && in->defined()) node->inputs.push_back(in->impl());
  }
  node->backward = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->node = std::move(node);
  return out;
}

Real* grad_sink(const std::shared_ptr<detail::TensorImpl>& t) {
  if (!t || !t->requires_grad) return nullptr;
  return t->ensure_grad().data();
}

PTSC_END_NAMESPACE
