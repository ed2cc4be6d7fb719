#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "backdrop/format_error.hpp"

namespace backdrop {

struct GpClassSpec {
  double ell_small = 0;  // correlation lengths in pixels
  double ell_large = 0;
  std::uint16_t label = 0;
};

enum class ComposeMode { convolve, multiply };

ComposeMode parse_compose_mode(const std::string& text);
std::string to_string(ComposeMode mode);

// Defaults for 128x128 images.
std::vector<GpClassSpec> desk_scale_classes();

// Stationary Gaussian field on an H x W torus with covariance exp(-r^2 / (2 ell^2)),
// by spectral synthesis; normalized to sample mean 0 and variance 1.
std::vector<double> gp_sample_field(std::size_t H, std::size_t W, double ell, std::uint64_t seed);

// In-place shift and scale to sample mean 0, variance 1 (population convention).
void normalize_field(std::vector<double>& f);

// Circular convolution (frequency-domain product) or elementwise product of
// two H x W fields, renormalized. Exposed so tests can substitute either input.
std::vector<double> compose_fields(const std::vector<double>& small, const std::vector<double>& large, std::size_t H,
                                   std::size_t W, ComposeMode mode);

struct TextureSample {
  std::vector<double> image;  // H x W, row-major
  std::uint16_t label = 0;
  std::uint64_t seed = 0;
};

TextureSample two_scale_sample(const GpClassSpec& spec, std::size_t H, std::size_t W, ComposeMode mode,
                               std::uint64_t seed);

// In-memory image of a GPTX file.
struct GptxData {
  std::uint32_t H = 0, W = 0;
  std::uint16_t n_classes = 0;
  std::vector<std::uint16_t> labels;
  std::vector<float> pixels;  // n_records * H * W

  std::size_t size() const { return labels.size(); }
  bool operator==(const GptxData&) const = default;
};

inline constexpr std::uint32_t kGptxVersion = 1;

void write_gptx(const std::string& path, const GptxData& data);
GptxData read_gptx(const std::string& path);

struct GpDatasetFiles {
  std::string train_path, test_path;
  GptxData train, test;
};

// Writes <out_dir>/train.gptx and <out_dir>/test.gptx. Every image gets its own
// seed derived from (seed, split, class, index).
GpDatasetFiles make_gp_dataset(const std::vector<GpClassSpec>& specs, std::size_t H, std::size_t W,
                               std::size_t n_train_per_class, std::size_t n_test_per_class, ComposeMode mode,
                               std::uint64_t seed, const std::string& out_dir);

// (small-scale factor index, large-scale factor index) of a class on a
// factorial grid; indices follow ascending length.
std::pair<std::size_t, std::size_t> scale_labels(std::uint16_t label, const std::vector<GpClassSpec>& specs);

// 8-bit binary PGM, [-3, 3] mapped linearly to [0, 255] and clamped.
void write_pgm_preview(const std::string& path, const float* values, std::size_t H, std::size_t W);

}  // namespace backdrop
