#include "backdrop/mask.hpp"

#include <algorithm>
#include <numeric>

namespace backdrop {

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "batch") return MaskMode::batch;
  if (text == "spatial") return MaskMode::spatial;
  throw ConfigError("unknown mask mode '" + text + "' (expected batch or spatial)");
}

std::string to_string(MaskMode mode) { return mode == MaskMode::batch ? "batch" : "spatial"; }

ScalingConvention parse_scaling_convention(const std::string& text) {
  if (text == "rescaled") return ScalingConvention::rescaled;
  if (text == "rescaled_keep_prob") return ScalingConvention::rescaled_keep_prob;
  throw ConfigError("unknown scaling convention '" + text + "' (expected rescaled or rescaled_keep_prob)");
}

std::string to_string(ScalingConvention convention) {
  return convention == ScalingConvention::rescaled ? "rescaled" : "rescaled_keep_prob";
}

void check_drop_probability(double p) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("drop probability must lie in [0, 1), got " + std::to_string(p));
  }
}

std::vector<std::uint8_t> bernoulli_keep_mask(std::size_t n, double p, std::mt19937_64& rng) {
  check_drop_probability(p);
  if (n == 0) throw ConfigError("bernoulli_keep_mask: need at least one entry");
  std::vector<std::uint8_t> keep(n, 1);
  if (p == 0.0) return keep;
  std::bernoulli_distribution coin(1.0 - p);
  do {
    for (auto& k : keep) k = coin(rng) ? 1 : 0;
  } while (std::none_of(keep.begin(), keep.end(), [](std::uint8_t k) { return k != 0; }));
  return keep;
}

double mask_scale(std::size_t n, std::size_t kept, double p, ScalingConvention convention) {
  if (kept == 0) throw std::logic_error("mask_scale: empty mask reached the backward pass");
  const double scale = static_cast<double>(n) / static_cast<double>(kept);
  return convention == ScalingConvention::rescaled ? scale : scale * (1.0 - p);
}

std::vector<double> mask_backward_batch(std::span<const double> grad, std::span<const std::uint8_t> keep,
                                        double p, ScalingConvention convention) {
  const std::size_t n = keep.size();
  if (n == 0 || grad.size() % n != 0) {
    throw ShapeError("mask_backward_batch: gradient of " + std::to_string(grad.size()) +
                     " values does not split into " + std::to_string(n) + " rows");
  }
  const std::size_t kept = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
  const double scale = mask_scale(n, kept, p, convention);
  const std::size_t row = grad.size() / n;
  std::vector<double> out(grad.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    for (std::size_t j = 0; j < row; ++j) out[i * row + j] = grad[i * row + j] * scale;
  }
  return out;
}

std::vector<double> mask_backward_spatial(std::span<const double> grad, const Shape& grad_shape,
                                          std::span<const std::uint8_t> keep, double p,
                                          ScalingConvention convention) {
  if (grad_shape.size() != 4 || shape_numel(grad_shape) != grad.size()) {
    throw ShapeError("mask_backward_spatial: expected an NCHW gradient, got " + shape_str(grad_shape));
  }
  const std::size_t batch = grad_shape[0], channels = grad_shape[1];
  const std::size_t sites = grad_shape[2] * grad_shape[3];
  if (keep.size() != batch * sites) {
    throw ShapeError("mask_backward_spatial: mask of " + std::to_string(keep.size()) +
                     " sites does not match gradient " + shape_str(grad_shape));
  }
  std::vector<double> out(grad.size(), 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    auto sample = keep.subspan(n * sites, sites);
    const std::size_t kept = static_cast<std::size_t>(std::count(sample.begin(), sample.end(), std::uint8_t{1}));
    const double scale = mask_scale(sites, kept, p, convention);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * sites;
      for (std::size_t s = 0; s < sites; ++s) {
        if (sample[s]) out[base + s] = grad[base + s] * scale;
      }
    }
  }
  return out;
}

double effective_batch_size(std::size_t batch, double p) {
  check_drop_probability(p);
  if (batch == 0) throw ConfigError("effective_batch_size: batch must be at least 1");
  return static_cast<double>(batch) * (1.0 - p);
}

MaskingLayer::MaskingLayer(MaskOptions options, std::uint64_t seed) : options_(options), rng_(seed) {
  check_drop_probability(options_.p);
}

void MaskingLayer::set_p(double p) {
  check_drop_probability(p);
  options_.p = p;
}

std::size_t MaskingLayer::sites_per_sample(const Shape& shape) const {
  if (options_.mode == MaskMode::batch) return 1;
  if (shape.size() != 4) {
    throw ShapeError("spatial mask: expected an NCHW input, got " + shape_str(shape));
  }
  return shape[2] * shape[3];
}

std::vector<std::uint8_t> MaskingLayer::draw(const Shape& shape) {
  if (shape.empty() || shape[0] == 0) throw ShapeError("mask: input needs a nonempty leading axis");
  const std::size_t sites = sites_per_sample(shape);
  if (options_.mode == MaskMode::batch) return bernoulli_keep_mask(shape[0], options_.p, rng_);
  std::vector<std::uint8_t> keep;
  keep.reserve(shape[0] * sites);
  for (std::size_t n = 0; n < shape[0]; ++n) {
    auto sample = bernoulli_keep_mask(sites, options_.p, rng_);
    keep.insert(keep.end(), sample.begin(), sample.end());
  }
  return keep;
}

Tensor MaskingLayer::forward(const Tensor& v) {
  const std::size_t expected = v.rank() == 0 ? 0 : v.dim(0) * sites_per_sample(v.shape());
  if (frozen_) {
    if (frozen_->size() != expected) {
      throw ShapeError("mask: frozen mask of " + std::to_string(frozen_->size()) + " sites does not fit input " +
                       shape_str(v.shape()));
    }
    last_mask_ = *frozen_;
  } else {
    last_mask_ = draw(v.shape());
  }
  std::vector<double> copy(v.data().begin(), v.data().end());
  Tensor out(v.shape(), std::move(copy));
  auto backward = [keep = last_mask_, shape = v.shape(), p = options_.p, mode = options_.mode,
                   convention = options_.convention](std::span<const double> g, GradSinks sinks) {
    auto masked = mode == MaskMode::batch ? mask_backward_batch(g, keep, p, convention)
                                          : mask_backward_spatial(g, shape, keep, p, convention);
    for (std::size_t i = 0; i < masked.size(); ++i) sinks[0][i] += masked[i];
  };
  return Tape::current().record(options_.mode == MaskMode::batch ? "mask_batch" : "mask_spatial", {v},
                                std::move(out), std::move(backward));
}

}  // namespace backdrop
