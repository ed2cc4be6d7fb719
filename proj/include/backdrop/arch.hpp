#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "backdrop/mask.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop {

class ArchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LayerKind { conv2d, relu, batchnorm, maxpool, mask, global_avg_pool, softmax_head };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t out_channels = 0;  // conv2d
  std::size_t kernel = 0;        // conv2d, maxpool
  std::size_t stride = 1;        // conv2d, maxpool
  std::size_t padding = 0;       // conv2d
  double p = 0.0;                // mask
  MaskMode mode = MaskMode::batch;
  std::string tag;          // mask
  std::size_t classes = 0;  // softmax_head
};

// Descriptor text, one layer per item separated by ';' or newlines:
//   conv2d(out, kernel[, stride[, padding]])  relu  batchnorm  maxpool(kernel[, stride])
//   mask(p, batch|spatial, tag)  global_avg_pool  softmax_head(classes)
struct ArchSpec {
  std::string name;
  std::vector<LayerSpec> layers;
};

LayerSpec parse_layer(const std::string& text);
ArchSpec parse_arch(const std::string& text, std::string name = "inline");
std::string to_string(const LayerSpec& layer);
std::string to_string(const ArchSpec& spec);

// Built-in networks. `classes` sets the head width; 0 keeps the preset default.
//   gp-small       128x128 single-channel textures, masks p_s (fine lattice) and p_l (heatmap)
//   heatmap-small  32x32 RGB, all-conv, one spatial mask p before global average pooling
//   cloud-small    (2, 1, 1) points through 1x1 convs, no masks
ArchSpec preset_arch(const std::string& name, std::size_t classes = 0);
std::vector<std::string> preset_names();

// Output shape of every layer for a (B, C, H, W) input; throws ArchError naming the
// first layer that does not fit, and on duplicate mask tags or a missing head.
std::vector<Shape> propagate_shapes(const ArchSpec& spec, const Shape& input);

std::size_t parameter_count(const ArchSpec& spec, const Shape& input);

}  // namespace backdrop
