#pragma once

#include <cstddef>
#include <vector>

#include "backdrop/tensor.hpp"

namespace backdrop {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  // Backward computed one output row at a time. With skip_zero_rows, rows whose
  // incoming gradient is zero in every channel are skipped; the result is
  // bitwise identical to processing them.
  bool row_tiled_backward = false;
  bool skip_zero_rows = false;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

// Cross-correlation. x: (B, Cin, H, W); weight: (Cout, Cin, kh, kw); bias: (Cout) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dOptions& options = {});

Tensor relu(const Tensor& x);

enum class NormMode { train, eval };

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization of (B, C, ...) input. Train mode uses batch
// statistics and updates `state`; eval mode reads `state`.
Tensor batchnorm(const Tensor& x, const Tensor& scale, const Tensor& shift, BatchNormState& state, NormMode mode,
                 double eps = kBatchNormEps);

// Windows without padding; ties go to the first maximum in row-major order.
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

// (B, C, H, W) -> (B, C)
Tensor global_avg_pool(const Tensor& x);

// Row-wise softmax of (B, C) logits. Evaluation helper; not recorded.
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace backdrop
