#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the code paths it is used to check.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "backdrop/ops.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop::oracle {

// All 2^n keep vectors of length n with their conditional-on-nonempty
// Bernoulli(1 - p) probabilities.
struct WeightedMask {
  std::vector<std::uint8_t> keep;
  double probability;
};

inline std::vector<WeightedMask> nonempty_masks(std::size_t n, double p) {
  std::vector<WeightedMask> out;
  const double nonempty = 1.0 - std::pow(p, static_cast<double>(n));
  for (std::uint32_t bits = 1; bits < (1u << n); ++bits) {
    WeightedMask m{std::vector<std::uint8_t>(n), 1.0};
    for (std::size_t i = 0; i < n; ++i) {
      m.keep[i] = (bits >> i) & 1u;
      m.probability *= m.keep[i] ? (1.0 - p) : p;
    }
    m.probability /= nonempty;
    out.push_back(std::move(m));
  }
  return out;
}

// Per-entry weight (n / |b|) * b of a batch mask, expanded over row_size trailing values.
inline std::vector<double> batch_mask_weights(const std::vector<std::uint8_t>& keep, std::size_t row_size) {
  double kept = 0;
  for (auto k : keep) kept += k;
  const double scale = static_cast<double>(keep.size()) / kept;
  std::vector<double> w;
  for (auto k : keep)
    for (std::size_t j = 0; j < row_size; ++j) w.push_back(k ? scale : 0.0);
  return w;
}

// Same for a spatial mask (B, H, W) applied to an NCHW tensor.
inline std::vector<double> spatial_mask_weights(const std::vector<std::uint8_t>& keep, const Shape& nchw) {
  const std::size_t B = nchw[0], C = nchw[1], S = nchw[2] * nchw[3];
  std::vector<double> w(B * C * S, 0.0);
  for (std::size_t n = 0; n < B; ++n) {
    double kept = 0;
    for (std::size_t s = 0; s < S; ++s) kept += keep[n * S + s];
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < S; ++s)
        w[(n * C + c) * S + s] = keep[n * S + s] ? static_cast<double>(S) / kept : 0.0;
  }
  return w;
}

// Fixed-mask surrogate layer v -> anchor + w * (v - anchor). It has the same
// value as the identity at the anchor and gradient w, the rescaled mask.
inline Tensor anchored_rescale(const Tensor& v, const Tensor& anchor, const std::vector<double>& weights) {
  Tensor w(v.shape(), weights);
  return anchor + w * (v - anchor);
}

inline double brute_force_auc(const std::vector<double>& s, const std::vector<std::size_t>& y) {
  double hits = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return hits / pairs;
}

inline double brute_force_rank_loss(const std::vector<double>& s, const std::vector<std::size_t>& y, double tau) {
  double total = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      total += 1.0 / (1.0 + std::exp(-(s[i] - s[j]) / tau));
    }
  return 1.0 - total / pairs;
}

// Dataset-level latent distance from explicit class means; rows of v are D long.
inline double brute_force_latent_distance(const std::vector<double>& v, std::size_t D,
                                          const std::vector<std::size_t>& labels, double d) {
  std::size_t classes = 0;
  for (auto y : labels) classes = std::max(classes, y + 1);
  std::vector<std::vector<double>> sums(classes, std::vector<double>(D, 0.0));
  std::vector<double> counts(classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    counts[labels[i]] += 1;
    for (std::size_t k = 0; k < D; ++k) sums[labels[i]][k] += v[i * D + k];
  }
  double total = 0;
  for (std::size_t a = 0; a < classes; ++a)
    for (std::size_t b = a + 1; b < classes; ++b) {
      if (counts[a] == 0 || counts[b] == 0) continue;
      double dist2 = 0;
      for (std::size_t k = 0; k < D; ++k) {
        const double diff = sums[a][k] / counts[a] - sums[b][k] / counts[b];
        dist2 += diff * diff;
      }
      total += (dist2 - d * d) * (dist2 - d * d);
    }
  return total;
}

// Periodic normalized autocorrelation of an H x W field at integer lag,
// averaged over the horizontal and vertical directions.
inline double autocorrelation(const std::vector<double>& f, std::size_t H, std::size_t W, std::size_t lag) {
  double mean = 0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0, cov = 0;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double a = f[i * W + j] - mean;
      var += a * a;
      cov += 0.5 * a * (f[i * W + (j + lag) % W] - mean) + 0.5 * a * (f[((i + lag) % H) * W + j] - mean);
    }
  return cov / var;
}

}  // namespace backdrop::oracle
