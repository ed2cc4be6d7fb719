#include "backdrop/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace backdrop {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, padding, ho, wo;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * P;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[iw];
          }
        }
      }
}

// Scatter-adds output rows [row_begin, row_end) of a column block (row stride col_stride) into dx.
void col2im(const double* cols, std::size_t col_stride, const ConvGeometry& g, std::size_t row_begin,
            std::size_t row_end, double* dx) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * col_stride;
        for (std::size_t oh = row_begin; oh < row_end; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const double* src = row + (oh - row_begin) * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += src[ow];
          }
        }
      }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0 || kernel == 0) throw ShapeError("conv2d: kernel and stride must be positive");
  if (in + 2 * padding < kernel) return 0;
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dOptions& options) {
  if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), weight.dim(3),
                 options.stride, options.padding, 0, 0};
  g.ho = conv_output_extent(g.h, g.kh, g.stride, g.padding);
  g.wo = conv_output_extent(g.w, g.kw, g.stride, g.padding);
  if (g.ho == 0 || g.wo == 0) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " leaves no output for input " +
                     shape_str(x.shape()));
  }
  const std::size_t K = g.k(), P = g.p();
  const bool keep_cols = grad_enabled() && (x.requires_grad() || weight.requires_grad() ||
                                            (bias.defined() && bias.requires_grad()));
  auto cols = std::make_shared<std::vector<double>>(keep_cols ? g.batch * K * P : K * P);
  std::vector<double> out(g.batch * g.cout * P);
  ConstMatrixMap W(weight.data().data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < g.batch; ++n) {
    double* c = cols->data() + (keep_cols ? n * K * P : 0);
    im2col(x.data().data() + n * g.cin * g.h * g.w, g, c);
    ConstMatrixMap C(c, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    MatrixMap Y(out.data() + n * g.cout * P, static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(P));
    Y.noalias() = W * C;
    if (bias.defined()) {
      for (std::size_t co = 0; co < g.cout; ++co) Y.row(static_cast<Eigen::Index>(co)).array() += bias.data()[co];
    }
  }
  Tensor result(Shape{g.batch, g.cout, g.ho, g.wo}, std::move(out));
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  if (!keep_cols) return Tape::current().record("conv2d", std::move(inputs), std::move(result), {});

  return Tape::current().record(
      "conv2d", std::move(inputs), std::move(result),
      [g, cols, weight, options](std::span<const double> grad, GradSinks sinks) {
        const std::size_t K = g.k(), P = g.p();
        const auto Ki = static_cast<Eigen::Index>(K), Pi = static_cast<Eigen::Index>(P);
        const auto Co = static_cast<Eigen::Index>(g.cout);
        ConstMatrixMap W(weight.data().data(), Co, Ki);
        const bool want_x = !sinks[0].empty(), want_w = !sinks[1].empty();
        const bool want_b = sinks.size() > 2 && !sinks[2].empty();
        std::vector<double> dcols(want_x ? K * (options.row_tiled_backward ? g.wo : P) : 0);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* gn = grad.data() + n * g.cout * P;
          const double* cn = cols->data() + n * K * P;
          if (want_b) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              double s = 0.0;
              for (std::size_t q = 0; q < P; ++q) s += gn[co * P + q];
              sinks[2][co] += s;
            }
          }
          if (!options.row_tiled_backward) {
            ConstMatrixMap G(gn, Co, Pi);
            ConstMatrixMap C(cn, Ki, Pi);
            if (want_w) {
              MatrixMap dW(sinks[1].data(), Co, Ki);
              dW.noalias() += G * C.transpose();
            }
            if (want_x) {
              MatrixMap dC(dcols.data(), Ki, Pi);
              dC.noalias() = W.transpose() * G;
              col2im(dcols.data(), P, g, 0, g.ho, sinks[0].data() + n * g.cin * g.h * g.w);
            }
            continue;
          }
          using Stride = Eigen::OuterStride<>;
          const auto Wo = static_cast<Eigen::Index>(g.wo);
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            if (options.skip_zero_rows) {
              bool zero = true;
              for (std::size_t co = 0; co < g.cout && zero; ++co) {
                const double* r = gn + co * P + oh * g.wo;
                zero = std::all_of(r, r + g.wo, [](double v) { return v == 0.0; });
              }
              if (zero) continue;
            }
            Eigen::Map<const RowMatrix, 0, Stride> G(gn + oh * g.wo, Co, Wo, Stride(Pi));
            Eigen::Map<const RowMatrix, 0, Stride> C(cn + oh * g.wo, Ki, Wo, Stride(Pi));
            if (want_w) {
              MatrixMap dW(sinks[1].data(), Co, Ki);
              dW.noalias() += G * C.transpose();
            }
            if (want_x) {
              MatrixMap dC(dcols.data(), Ki, Wo);
              dC.noalias() = W.transpose() * G;
              col2im(dcols.data(), g.wo, g, oh, oh + 1, sinks[0].data() + n * g.cin * g.h * g.w);
            }
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return Tape::current().record("relu", {x}, Tensor(x.shape(), std::move(out)),
                                [x](std::span<const double> g, GradSinks sinks) {
                                  auto xv = x.data();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    if (xv[i] > 0.0) sinks[0][i] += g[i];
                                });
}

Tensor batchnorm(const Tensor& x, const Tensor& scale, const Tensor& shift, BatchNormState& state, NormMode mode,
                 double eps) {
  if (x.rank() < 2) throw ShapeError("batchnorm: expected (B, C, ...) input, got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t inner = x.numel() / (batch * channels);
  if (scale.numel() != channels || shift.numel() != channels) {
    throw ShapeError("batchnorm: scale/shift " + shape_str(scale.shape()) + " do not match input " +
                     shape_str(x.shape()));
  }
  if (state.running_mean.size() != channels) state.running_mean.assign(channels, 0.0);
  if (state.running_var.size() != channels) state.running_var.assign(channels, 1.0);
  if (mode == NormMode::train && batch < 2) {
    throw ShapeError("batchnorm: train mode needs a batch of at least 2, got " + std::to_string(batch));
  }
  const std::size_t count = batch * inner;
  auto xv = x.data();
  auto gamma = scale.data();
  auto beta = shift.data();
  std::vector<double> mean(channels), inv_std(channels);
  if (mode == NormMode::train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < inner; ++i) s += xv[(n * channels + c) * inner + i];
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = xv[(n * channels + c) * inner + i] - mu;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[c] = (1.0 - kBatchNormMomentum) * state.running_mean[c] + kBatchNormMomentum * mu;
      state.running_var[c] = (1.0 - kBatchNormMomentum) * state.running_var[c] + kBatchNormMomentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + eps);
    }
  }
  std::vector<double> normalized(x.numel()), out(x.numel());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (n * channels + c) * inner + i;
        normalized[k] = (xv[k] - mean[c]) * inv_std[c];
        out[k] = gamma[c] * normalized[k] + beta[c];
      }
  return Tape::current().record(
      "batchnorm", {x, scale, shift}, Tensor(x.shape(), std::move(out)),
      [batch, channels, inner, count, mode, scale, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](std::span<const double> g, GradSinks sinks) {
        auto gamma = scale.data();
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = (n * channels + c) * inner + i;
              sum_g += g[k];
              sum_gx += g[k] * normalized[k];
            }
          if (!sinks[1].empty()) sinks[1][c] += sum_gx;
          if (!sinks[2].empty()) sinks[2][c] += sum_g;
          if (sinks[0].empty()) continue;
          const double a = gamma[c] * inv_std[c];
          if (mode == NormMode::eval) {
            for (std::size_t n = 0; n < batch; ++n)
              for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t k = (n * channels + c) * inner + i;
                sinks[0][k] += a * g[k];
              }
            continue;
          }
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = sum_gx / static_cast<double>(count);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = (n * channels + c) * inner + i;
              sinks[0][k] += a * (g[k] - mean_g - normalized[k] * mean_gx);
            }
        }
      });
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: expected NCHW input, got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t ho = conv_output_extent(H, kernel, stride, 0);
  const std::size_t wo = conv_output_extent(W, kernel, stride, 0);
  if (ho == 0 || wo == 0) {
    throw ShapeError("maxpool2d: window " + std::to_string(kernel) + " does not fit input " + shape_str(x.shape()));
  }
  auto xv = x.data();
  std::vector<double> out(B * C * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t oh = 0; oh < ho; ++oh)
      for (std::size_t ow = 0; ow < wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = base + oh * stride * W + ow * stride;
        for (std::size_t i = 0; i < kernel; ++i)
          for (std::size_t j = 0; j < kernel; ++j) {
            const std::size_t k = base + (oh * stride + i) * W + ow * stride + j;
            if (xv[k] > best) {
              best = xv[k];
              best_idx = k;
            }
          }
        const std::size_t o = (plane * ho + oh) * wo + ow;
        out[o] = best;
        argmax[o] = best_idx;
      }
  }
  return Tape::current().record("maxpool2d", {x}, Tensor(Shape{B, C, ho, wo}, std::move(out)),
                                [argmax = std::move(argmax)](std::span<const double> g, GradSinks sinks) {
                                  for (std::size_t o = 0; o < g.size(); ++o) sinks[0][argmax[o]] += g[o];
                                });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool: expected NCHW input, got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  auto xv = x.data();
  std::vector<double> out(B * C);
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    double s = 0.0;
    for (std::size_t i = 0; i < S; ++i) s += xv[plane * S + i];
    out[plane] = s / static_cast<double>(S);
  }
  return Tape::current().record("global_avg_pool", {x}, Tensor(Shape{B, C}, std::move(out)),
                                [S](std::span<const double> g, GradSinks sinks) {
                                  const double inv = 1.0 / static_cast<double>(S);
                                  for (std::size_t plane = 0; plane < g.size(); ++plane)
                                    for (std::size_t i = 0; i < S; ++i) sinks[0][plane * S + i] += g[plane] * inv;
                                });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected (B, C) logits, got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  auto lv = logits.data();
  std::vector<double> probs(B * C);
  for (std::size_t n = 0; n < B; ++n) {
    const double m = *std::max_element(lv.begin() + static_cast<std::ptrdiff_t>(n * C),
                                       lv.begin() + static_cast<std::ptrdiff_t>((n + 1) * C));
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += (probs[n * C + c] = std::exp(lv[n * C + c] - m));
    for (std::size_t c = 0; c < C; ++c) probs[n * C + c] /= z;
  }
  return probs;
}

}  // namespace backdrop
