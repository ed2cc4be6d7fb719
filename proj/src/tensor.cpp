#include "backdrop/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace backdrop {

namespace {

std::atomic<std::uint64_t> next_generation{1};

thread_local Tape* active_tape = nullptr;
thread_local bool recording_enabled = true;

std::uint64_t fresh_generation() { return next_generation.fetch_add(1); }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values but " +
                     std::to_string(data.size()) + " were given");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (!impl_->grad) throw std::logic_error("grad: tensor has no gradient");
  return *impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tape::Tape() : generation_(fresh_generation()) {}

Tape& Tape::current() {
  if (active_tape == nullptr) {
    thread_local Tape fallback;
    active_tape = &fallback;
  }
  return *active_tape;
}

bool Tape::owns(const TensorImpl& impl) const {
  return impl.node && impl.node->tape == this && impl.node->generation == generation_;
}

Tensor Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
                    BackwardFn backward) {
#ifndef NDEBUG
  bool finite_inputs = true;
  for (const auto& in : inputs) {
    for (double v : in.data()) finite_inputs = finite_inputs && std::isfinite(v);
  }
  if (finite_inputs) {
    for (double v : output.data()) {
      if (!std::isfinite(v)) {
        throw std::domain_error(std::string(op) + ": non-finite output from finite inputs");
      }
    }
  }
#endif
  if (!recording_enabled) return output;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return output;

  Node node;
  node.op = std::string(op);
  node.output_numel = output.numel();
  node.backward = std::move(backward);
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.impl_);
  output.impl_->requires_grad = true;
  output.impl_->node = TapeRef{this, generation_, nodes_.size()};
  nodes_.push_back(std::move(node));
  return output;
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " +
                     (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  }
  if (!owns(*root.impl_)) {
    throw std::logic_error("backward: root was not produced on the active tape");
  }
  const std::size_t root_index = root.impl_->node->index;
  std::vector<std::vector<double>> node_grads(root_index + 1);
  node_grads[root_index].assign(1, 1.0);

  std::vector<std::span<double>> sinks;
  for (std::size_t i = root_index + 1; i-- > 0;) {
    if (node_grads[i].empty()) continue;
    Node& node = nodes_[i];
    sinks.assign(node.inputs.size(), std::span<double>{});
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      TensorImpl& in = *node.inputs[j];
      if (!in.requires_grad) continue;
      if (owns(in)) {
        auto& buf = node_grads[in.node->index];
        if (buf.empty()) buf.assign(in.data.size(), 0.0);
        sinks[j] = buf;
      } else {
        if (!in.grad) in.grad.emplace(in.data.size(), 0.0);
        sinks[j] = *in.grad;
      }
    }
    node.backward(node_grads[i], sinks);
    std::vector<double>().swap(node_grads[i]);
  }
}

void Tape::reset() {
  nodes_.clear();
  generation_ = fresh_generation();
}

TapeScope::TapeScope() : tape_(std::make_unique<Tape>()), previous_(active_tape) {
  active_tape = tape_.get();
}

TapeScope::~TapeScope() { active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(recording_enabled) { recording_enabled = false; }

NoGradGuard::~NoGradGuard() { recording_enabled = previous_; }

bool grad_enabled() { return recording_enabled; }

void backward(const Tensor& root) { Tape::current().backward(root); }

}  // namespace backdrop
