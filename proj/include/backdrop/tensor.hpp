#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace backdrop {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

struct TapeRef {
  const Tape* tape = nullptr;
  std::uint64_t generation = 0;
  std::size_t index = 0;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  std::optional<TapeRef> node;
};

// Dense row-major tensor of doubles. Copies share storage, like a handle.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Direct write access; only meaningful for leaves (parameter updates, fixtures).
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);

  bool has_grad() const { return impl_->grad.has_value(); }
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad() { impl_->grad.reset(); }

  bool on_tape() const { return impl_->node.has_value(); }

  // Fresh leaf with copied data and no grad history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;

  std::shared_ptr<TensorImpl> impl_;
};

// Gradient sinks passed to a backward rule, one per input. An empty span means
// the input does not need a gradient. Rules accumulate (+=) into the sinks.
using GradSinks = std::span<const std::span<double>>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradSinks grad_in)>;

// Ordered record of the operations of one step. Node inputs always precede the
// node, so a reverse sweep over indices is a valid reverse topological order.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // The tape ops record onto for the calling thread.
  static Tape& current();

  // Records `output` as produced by `op` if any input requires grad; otherwise
  // returns `output` untouched.
  Tensor record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and sweeps the tape backwards, accumulating into
  // the grad slot of every reachable leaf.
  void backward(const Tensor& root);

  void reset();
  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t index) const { return nodes_.at(index).op; }

 private:
  struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::size_t output_numel = 0;
    BackwardFn backward;
  };

  bool owns(const TensorImpl& impl) const;

  std::vector<Node> nodes_;
  std::uint64_t generation_;
};

// Installs a fresh tape on the current thread for the lifetime of the scope.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  Tape& tape() { return *tape_; }

 private:
  std::unique_ptr<Tape> tape_;
  Tape* previous_;
};

// Disables recording on the current thread (evaluation passes).
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

// Backward on the current thread's tape.
void backward(const Tensor& root);

}  // namespace backdrop
