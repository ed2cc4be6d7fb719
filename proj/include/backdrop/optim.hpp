#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "backdrop/model.hpp"

namespace backdrop {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SgdOptions {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const SgdOptions& options);

// Momentum SGD over a model's parameters; parameters without a gradient are
// treated as having a zero gradient.
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {}

  // Throws NonFiniteGradient naming the parameter before touching any value.
  void step(std::vector<NamedParameter>& params);

  const SgdOptions& options() const { return options_; }
  std::vector<std::vector<double>>& velocities() { return velocities_; }
  const std::vector<std::vector<double>>& velocities() const { return velocities_; }

 private:
  SgdOptions options_;
  std::vector<std::vector<double>> velocities_;
};

}  // namespace backdrop
