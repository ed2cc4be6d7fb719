#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "backdrop/tensor.hpp"

namespace backdrop {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MaskMode {
  batch,    // one keep bit per leading-axis entry
  spatial,  // one keep bit per (sample, row, column) of an NCHW tensor
};

// How kept gradients are rescaled in the backward pass.
//   rescaled:            g * b * N / |b|
//   rescaled_keep_prob:  g * b * N / |b| * (1 - p)
// Only `rescaled` is an unbiased estimator of the unmasked gradient
// conditional on a nonempty mask.
enum class ScalingConvention { rescaled, rescaled_keep_prob };

MaskMode parse_mask_mode(const std::string& text);
std::string to_string(MaskMode mode);
ScalingConvention parse_scaling_convention(const std::string& text);
std::string to_string(ScalingConvention convention);

void check_drop_probability(double p);

// Independent Bernoulli(1 - p) keep bits, redrawn as a whole until at least one is set.
std::vector<std::uint8_t> bernoulli_keep_mask(std::size_t n, double p, std::mt19937_64& rng);

// Scale applied to kept entries: n / kept (times 1 - p for rescaled_keep_prob).
double mask_scale(std::size_t n, std::size_t kept, double p, ScalingConvention convention);

// Masked gradient for batch mode. grad holds keep.size() equal-length rows.
std::vector<double> mask_backward_batch(std::span<const double> grad, std::span<const std::uint8_t> keep,
                                        double p, ScalingConvention convention = ScalingConvention::rescaled);

// Masked gradient for spatial mode: grad is (B, C, H, W), keep is (B, H, W).
// The mask is shared across channels and rescaled per sample over its lattice.
std::vector<double> mask_backward_spatial(std::span<const double> grad, const Shape& grad_shape,
                                          std::span<const std::uint8_t> keep, double p,
                                          ScalingConvention convention = ScalingConvention::rescaled);

double effective_batch_size(std::size_t batch, double p);

struct MaskOptions {
  double p = 0.0;
  MaskMode mode = MaskMode::batch;
  ScalingConvention convention = ScalingConvention::rescaled;
  // Dropped sites need no backward work upstream; consumers may skip them.
  bool short_circuit = false;
};

// Identity in the forward pass; Bernoulli-masks and rescales the gradient in
// the backward pass. A fresh mask is drawn on every training forward.
class MaskingLayer {
 public:
  MaskingLayer(MaskOptions options, std::uint64_t seed);

  Tensor forward(const Tensor& v);

  // Pins the mask used by subsequent forwards (fixed-mask surrogate checks).
  void freeze(std::vector<std::uint8_t> keep) { frozen_ = std::move(keep); }
  void unfreeze() { frozen_.reset(); }

  void set_p(double p);
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  double p() const { return options_.p; }
  MaskMode mode() const { return options_.mode; }
  ScalingConvention convention() const { return options_.convention; }
  const MaskOptions& options() const { return options_; }
  const std::vector<std::uint8_t>& last_mask() const { return last_mask_; }

  // Mask sites per sample: 1 in batch mode, H * W in spatial mode.
  std::size_t sites_per_sample(const Shape& shape) const;

 private:
  std::vector<std::uint8_t> draw(const Shape& shape);

  MaskOptions options_;
  std::mt19937_64 rng_;
  std::optional<std::vector<std::uint8_t>> frozen_;
  std::vector<std::uint8_t> last_mask_;
};

}  // namespace backdrop
