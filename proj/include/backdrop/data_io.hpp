#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "backdrop/format_error.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop {

struct Dataset {
  Shape image_shape;          // (C, H, W)
  std::vector<float> images;  // N * C * H * W
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;  // optional

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return shape_numel(image_shape); }
  std::size_t num_classes() const;  // max label + 1, or class_names.size() if larger
  std::vector<std::size_t> class_counts() const;

  // (B, C, H, W) tensor and labels for the given indices.
  Tensor batch_images(const std::vector<std::size_t>& indices) const;
  std::vector<std::size_t> batch_labels(const std::vector<std::size_t>& indices) const;
  Dataset subset(const std::vector<std::size_t>& indices) const;

  // Throws unless images, labels and shape agree.
  void validate() const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

// One CIFAR-10 binary batch file; pixels scaled by 1/255.
Dataset load_cifar10_file(const std::string& path);

// data_batch_1..5.bin ("train") or test_batch.bin ("test") from a directory.
Dataset load_cifar10(const std::string& dir, const std::string& split = "train");

// Single-channel dataset from a GPTX file; values are kept as stored.
Dataset load_gptx(const std::string& path);

// <dir>/<class>/<name>.pgm, 8-bit binary PGM; classes in sorted directory order.
Dataset load_pgm_folder(const std::string& dir);

// Keeps all of class_a (relabelled 1) and the first floor(|a| / ratio) of a
// seeded shuffle of class_b (relabelled 0).
Dataset truncate_binary_imbalance(const Dataset& ds, std::size_t class_a, std::size_t class_b, double ratio,
                                  std::uint64_t seed);

// Class c (0-based) keeps unit * (c + 1) samples, chosen by a seeded shuffle.
Dataset truncate_linear_imbalance(const Dataset& ds, std::size_t unit, std::uint64_t seed);

// Splits every image into an s x s grid of equal tiles that inherit its label.
Dataset crop_tiles(const Dataset& ds, std::size_t s);

// Points in the plane as (2, 1, 1) images: class c is N(mu_c, I) with mu_c on a
// circle of radius `separation / 2` (two classes: +-separation/2 on the x axis).
Dataset make_gaussian_clouds(const std::vector<std::size_t>& per_class, double separation, std::uint64_t seed);

class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool stratified = false);

  // Index batches of the next epoch, a partition of [0, N); the last batch may be short.
  std::vector<std::vector<std::size_t>> next_epoch();
  std::size_t epoch() const { return epoch_; }

 private:
  const Dataset& ds_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool stratified_;
  std::size_t epoch_ = 0;
};

}  // namespace backdrop
