#include "backdrop/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "backdrop/log.hpp"
#include "backdrop/ops.hpp"

namespace backdrop {

double LossValue::component(const std::string& name) const {
  for (const auto& [key, v] : breakdown)
    if (key == name) return v;
  throw std::out_of_range("loss has no component '" + name + "'");
}

LossValue softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  for (auto y : labels) {
    if (y >= C) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(C) + ")");
    }
  }
  auto lv = logits.data();
  std::vector<double> probs(B * C);
  double total = 0.0;
  for (std::size_t n = 0; n < B; ++n) {
    const double* row = lv.data() + n * C;
    const double m = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - m);
    const double log_z = std::log(z) + m;
    total += log_z - row[labels[n]];
    for (std::size_t c = 0; c < C; ++c) probs[n * C + c] = std::exp(row[c] - log_z);
  }
  const double loss = total / static_cast<double>(B);
  Tensor value = Tape::current().record(
      "softmax_cross_entropy", {logits}, Tensor::scalar(loss),
      [probs = std::move(probs), labels, B, C](std::span<const double> g, GradSinks sinks) {
        const double scale = g[0] / static_cast<double>(B);
        for (std::size_t n = 0; n < B; ++n)
          for (std::size_t c = 0; c < C; ++c) {
            const double target = c == labels[n] ? 1.0 : 0.0;
            sinks[0][n * C + c] += scale * (probs[n * C + c] - target);
          }
      });
  return {value, {{"xe", loss}}};
}

namespace {

void split_binary(const std::vector<std::size_t>& labels, std::vector<std::size_t>& pos,
                  std::vector<std::size_t>& neg, const char* op) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos.push_back(i);
    } else if (labels[i] == 0) {
      neg.push_back(i);
    } else {
      throw std::invalid_argument(std::string(op) + ": labels must be 0 or 1, got " + std::to_string(labels[i]));
    }
  }
  if (pos.empty() || neg.empty()) {
    throw std::invalid_argument(std::string(op) +
                                ": batch holds a single class; use stratified batching so every batch has both");
  }
}

}  // namespace

LossValue rank_statistic_loss(const Tensor& scores, const std::vector<std::size_t>& labels, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("rank_statistic_loss: tau must be positive");
  if (scores.rank() != 1 || scores.dim(0) != labels.size()) {
    throw ShapeError("rank_statistic_loss: scores " + shape_str(scores.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> pos, neg;
  split_binary(labels, pos, neg, "rank_statistic_loss");
  const Shape pairs{pos.size(), neg.size()};
  Tensor sp = broadcast_to(reshape(index_select(scores, pos), Shape{pos.size(), 1}), pairs);
  Tensor sn = index_select(scores, neg);
  Tensor value = 1.0 - mean(sigmoid((sp - sn) * (1.0 / tau)));
  return {value, {{"rank", value.item()}}};
}

double roc_auc_exact(const std::vector<double>& scores, const std::vector<std::size_t>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc_exact: size mismatch");
  std::vector<std::size_t> pos, neg;
  split_binary(labels, pos, neg, "roc_auc_exact");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks (1-based) handle ties as one half.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

LossValue latent_distance_loss(const Tensor& v, const std::vector<std::size_t>& labels, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("latent_distance_loss: d must be positive");
  if (v.rank() != 2 || v.dim(0) != labels.size()) {
    throw ShapeError("latent_distance_loss: features " + shape_str(v.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  std::map<std::size_t, std::vector<std::size_t>> rows_by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) rows_by_class[labels[i]].push_back(i);
  if (rows_by_class.size() < 2) {
    log_warning("latent_distance_loss: fewer than two classes present, loss is zero");
    Tensor zero = sum(v) * 0.0;
    return {zero, {{"dist", 0.0}}};
  }
  std::vector<Tensor> means;
  for (const auto& [label, rows] : rows_by_class) means.push_back(mean(index_select(v, rows), 0));
  const double d2 = d * d;
  Tensor total;
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      Tensor diff = means[a] - means[b];
      Tensor term = power(sum(diff * diff) - d2, 2.0);
      total = total.defined() ? total + term : term;
    }
  return {total, {{"dist", total.item()}}};
}

LossValue composite_backdrop_loss(const Tensor& logits, const Tensor& features, const std::vector<std::size_t>& labels,
                                  double d, MaskingLayer& mask_xe, MaskingLayer& mask_dist) {
  LossValue xe = softmax_cross_entropy(mask_xe.forward(logits), labels);
  LossValue dist = latent_distance_loss(mask_dist.forward(features), labels, d);
  Tensor total = xe.value + dist.value;
  return {total, {{"xe", xe.item()}, {"dist", dist.item()}}};
}

}  // namespace backdrop
