#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "backdrop/arch.hpp"
#include "backdrop/layers.hpp"
#include "backdrop/mask.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop {

struct NamedParameter {
  std::string name;  // e.g. "3.conv2d.weight"
  Tensor value;
};

// Seed of the mask tagged `tag`; each tag gets its own stream so adding a mask
// elsewhere does not shift it.
std::uint64_t mask_stream_seed(std::uint64_t base, const std::string& tag);

struct BuildOptions {
  std::uint64_t init_seed = 0;
  std::uint64_t mask_seed = 1;
  ScalingConvention convention = ScalingConvention::rescaled;
  // Spatial masks fed by conv -> relu let that conv skip fully dropped rows in backward.
  bool short_circuit = false;
};

struct ModelOutput {
  Tensor logits;    // (B, classes)
  Tensor features;  // (B, D): input of the last conv2d, spatially averaged
  std::vector<Tensor> activations;  // output of every layer, when requested
};

class Model {
 public:
  // input_shape is (C, H, W).
  Model(ArchSpec spec, Shape input_shape, BuildOptions options = {});

  ModelOutput forward(const Tensor& x, bool keep_activations = false);

  void set_mode(NormMode mode) { mode_ = mode; }
  NormMode mode() const { return mode_; }

  const ArchSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return spec_.layers.back().classes; }

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  std::vector<BatchNormState>& norm_states() { return norm_states_; }
  const std::vector<BatchNormState>& norm_states() const { return norm_states_; }

  std::vector<std::string> mask_tags() const;
  bool has_mask(const std::string& tag) const { return masks_.count(tag) != 0; }
  MaskingLayer& mask(const std::string& tag);
  void zero_grad();

 private:
  struct Slot {
    int weight = -1, bias = -1;  // indices into params_ (conv) or scale/shift (batchnorm)
    int norm = -1;               // index into norm_states_
    std::string mask_tag;
    std::string feeds_mask;  // conv2d: tag of a spatial mask reached through relu only
  };

  ArchSpec spec_;
  Shape input_shape_;
  BuildOptions options_;
  NormMode mode_ = NormMode::train;
  std::vector<Slot> slots_;
  std::vector<NamedParameter> params_;
  std::vector<BatchNormState> norm_states_;
  std::map<std::string, std::unique_ptr<MaskingLayer>> masks_;
  std::size_t last_conv_ = 0;
};

std::unique_ptr<Model> build_model(const ArchSpec& spec, const Shape& input_shape, BuildOptions options = {});

}  // namespace backdrop
