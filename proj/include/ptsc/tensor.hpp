// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptsc/config.hpp"

PTSC_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl;

/// One recorded operation. `inputs` are the tensors the op read; `backward`
/// receives the gradient of the op's output and accumulates into the inputs.
struct TapeNode {
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(std::span<const Real> grad_out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  // Allocates a zero gradient on first use; gradients accumulate with +=.
  std::vector<Real>& ensure_grad();
};

}  // namespace detail

/// Dense row-major real array with reverse-mode differentiation.
///
/// A Tensor is a cheap handle: copies share storage. Values produced by an op
/// are never modified afterwards; only leaves (parameters, inputs) expose
/// mutable storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor scalar(Real value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const Real> data() const;
  /// Leaves only.
  std::span<Real> mutable_data();
  Real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad();

  bool is_leaf() const;
  /// Name of the op that produced this tensor, empty for leaves.
  std::string_view op_name() const;

  /// Reverse pass from a single-element tensor.
  void backward() const;

  /// Same values, no history, fresh storage.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_op_result(Shape, std::vector<Real>, std::string_view,
                               std::initializer_list<const Tensor*>,
                               std::function<void(std::span<const Real>)>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Whether new ops record themselves for backward on the current thread.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool flag);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op output. The backward closure is attached only when grad mode
/// is on and some input requires grad; it must not capture the output.
Tensor make_op_result(Shape shape, std::vector<Real> values, std::string_view op,
                      std::initializer_list<const Tensor*> inputs,
                      std::function<void(std::span<const Real>)> backward);

/// Gradient buffer of `t` for accumulation inside a backward closure, or
/// nullptr when `t` does not take gradients.
Real* grad_sink(const std::shared_ptr<detail::TensorImpl>& t);

PTSC_END_NAMESPACE
