#include "backdrop/optim.hpp"

#include <cmath>

namespace backdrop {

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const SgdOptions& o) {
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw std::invalid_argument("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = o.momentum * velocity[i] + grad[i] + o.weight_decay * param[i];
    param[i] -= o.lr * velocity[i];
  }
}

void Sgd::step(std::vector<NamedParameter>& params) {
  if (velocities_.empty()) {
    for (const auto& p : params) velocities_.emplace_back(p.value.numel(), 0.0);
  }
  if (velocities_.size() != params.size()) throw std::logic_error("Sgd::step: parameter list changed");
  for (const auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  std::vector<double> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].value;
    std::span<const double> g;
    if (t.has_grad()) {
      g = t.grad();
    } else {
      zeros.assign(t.numel(), 0.0);
      g = zeros;
    }
    sgd_step(t.mutable_data(), g, velocities_[i], options_);
  }
}

}  // namespace backdrop
