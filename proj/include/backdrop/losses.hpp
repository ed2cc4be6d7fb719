#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "backdrop/mask.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop {

struct LossValue {
  Tensor value;  // scalar, on tape when inputs require grad
  std::vector<std::pair<std::string, double>> breakdown;

  double item() const { return value.item(); }
  double component(const std::string& name) const;
};

// Mean over the batch of -log softmax(logits)[label]. logits: (B, C).
LossValue softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

// 1 - mean over (positive, negative) pairs of sigmoid((s_pos - s_neg) / tau).
LossValue rank_statistic_loss(const Tensor& scores, const std::vector<std::size_t>& labels, double tau = 1.0);

// Mann-Whitney estimate of ROC AUC; ties count one half. Not differentiable.
double roc_auc_exact(const std::vector<double>& scores, const std::vector<std::size_t>& labels);

// Sum over class pairs of (|mean_c - mean_c'|^2 - d^2)^2, with class means
// taken over the rows of v present in the batch. Classes absent from the
// batch are skipped; fewer than two present classes give zero.
LossValue latent_distance_loss(const Tensor& v, const std::vector<std::size_t>& labels, double d = 1.0);

// Cross-entropy on logits plus latent distance on features, each behind its own mask.
LossValue composite_backdrop_loss(const Tensor& logits, const Tensor& features, const std::vector<std::size_t>& labels,
                                  double d, MaskingLayer& mask_xe, MaskingLayer& mask_dist);

}  // namespace backdrop
