#include "backdrop/model.hpp"

#include <cmath>
#include <random>

#include "backdrop/ops.hpp"
#include "backdrop/rng.hpp"

namespace backdrop {

std::uint64_t mask_stream_seed(std::uint64_t base, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : tag) h = (h ^ c) * 1099511628211ull;
  return derive_seed({base, h});
}

Model::Model(ArchSpec spec, Shape input_shape, BuildOptions options)
    : spec_(std::move(spec)), input_shape_(std::move(input_shape)), options_(options) {
  if (input_shape_.size() != 3) throw ArchError("model input shape must be (C, H, W), got " + shape_str(input_shape_));
  const auto shapes = propagate_shapes(spec_, {1, input_shape_[0], input_shape_[1], input_shape_[2]});
  std::mt19937_64 rng(options_.init_seed);
  std::size_t channels = input_shape_[0];
  slots_.resize(spec_.layers.size());
  bool any_conv = false;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    auto& slot = slots_[i];
    const std::string prefix = std::to_string(i) + ".";
    if (l.kind == LayerKind::conv2d) {
      const std::size_t fan_in = channels * l.kernel * l.kernel;
      std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      std::vector<double> w(l.out_channels * fan_in);
      for (auto& v : w) v = he(rng);
      slot.weight = static_cast<int>(params_.size());
      params_.push_back({prefix + "conv2d.weight",
                         Tensor({l.out_channels, channels, l.kernel, l.kernel}, std::move(w), true)});
      slot.bias = static_cast<int>(params_.size());
      params_.push_back({prefix + "conv2d.bias", Tensor::zeros({l.out_channels}).set_requires_grad(true)});
      last_conv_ = i;
      any_conv = true;
      for (std::size_t j = i + 1; j < spec_.layers.size(); ++j) {
        const auto& next = spec_.layers[j];
        if (next.kind == LayerKind::relu) continue;
        if (next.kind == LayerKind::mask && next.mode == MaskMode::spatial) slot.feeds_mask = next.tag;
        break;
      }
    } else if (l.kind == LayerKind::batchnorm) {
      slot.weight = static_cast<int>(params_.size());
      params_.push_back({prefix + "batchnorm.scale", Tensor::full({channels}, 1.0).set_requires_grad(true)});
      slot.bias = static_cast<int>(params_.size());
      params_.push_back({prefix + "batchnorm.shift", Tensor::zeros({channels}).set_requires_grad(true)});
      slot.norm = static_cast<int>(norm_states_.size());
      norm_states_.push_back({std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)});
    } else if (l.kind == LayerKind::mask) {
      MaskOptions mo{l.p, l.mode, options_.convention, options_.short_circuit};
      masks_.emplace(l.tag, std::make_unique<MaskingLayer>(mo, mask_stream_seed(options_.mask_seed, l.tag)));
      slot.mask_tag = l.tag;
    }
    channels = shapes[i][1];
  }
  if (!any_conv) throw ArchError("architecture '" + spec_.name + "' has no conv2d layer");
}

ModelOutput Model::forward(const Tensor& x, bool keep_activations) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != input_shape_[0] || s[2] != input_shape_[1] || s[3] != input_shape_[2]) {
    throw ShapeError("model '" + spec_.name + "': input " + shape_str(s) + " does not match (B," +
                     shape_str(input_shape_).substr(1));
  }
  ModelOutput out;
  Tensor h = x;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const auto& slot = slots_[i];
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (i == last_conv_) out.features = h.rank() == 4 ? global_avg_pool(h) : h;
        Conv2dOptions opt{l.stride, l.padding, false, false};
        if (options_.short_circuit && !slot.feeds_mask.empty() && masks_.at(slot.feeds_mask)->p() > 0.0) {
          opt.row_tiled_backward = true;
          opt.skip_zero_rows = true;
        }
        h = conv2d(h, params_[slot.weight].value, params_[slot.bias].value, opt);
        break;
      }
      case LayerKind::relu: h = relu(h); break;
      case LayerKind::batchnorm:
        h = batchnorm(h, params_[slot.weight].value, params_[slot.bias].value, norm_states_[slot.norm], mode_);
        break;
      case LayerKind::maxpool: h = maxpool2d(h, l.kernel, l.stride); break;
      case LayerKind::mask:
        // Evaluation never masks; the forward pass is the identity either way.
        if (mode_ == NormMode::train && grad_enabled()) h = masks_.at(slot.mask_tag)->forward(h);
        break;
      case LayerKind::global_avg_pool: h = global_avg_pool(h); break;
      case LayerKind::softmax_head:
        if (h.rank() == 4) h = global_avg_pool(h);
        break;
    }
    if (keep_activations) out.activations.push_back(h);
  }
  out.logits = h;
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::vector<std::string> Model::mask_tags() const {
  std::vector<std::string> tags;
  for (const auto& [tag, m] : masks_) tags.push_back(tag);
  return tags;
}

MaskingLayer& Model::mask(const std::string& tag) {
  auto it = masks_.find(tag);
  if (it == masks_.end()) throw ArchError("model '" + spec_.name + "' has no mask tagged '" + tag + "'");
  return *it->second;
}

void Model::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::unique_ptr<Model> build_model(const ArchSpec& spec, const Shape& input_shape, BuildOptions options) {
  return std::make_unique<Model>(spec, input_shape, options);
}

}  // namespace backdrop
