#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "backdrop/gp_texture.hpp"
#include "backdrop/mask.hpp"

namespace backdrop {

// Flat "section.key" -> value text. File syntax:
//   # comment
//   [section]
//   key = value
// Keys may also be written fully qualified outside any section.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text, const std::string& source = "config");
  static ConfigMap parse_file(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // "section.key=value"
  void apply_override(const std::string& assignment);
  void merge(const ConfigMap& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  // Sectioned text that parse() reads back to the same map.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

struct TrainConfig {
  std::string out_dir = "runs/default";
  std::size_t eval_every = 1;
  std::size_t eval_batch = 100;

  std::string data_source = "gptx";  // gptx | cifar10 | pgm | clouds
  std::string train_path, test_path;
  std::vector<GpClassSpec> scales;  // factorial grid for scale accuracies; entry i is class i
  std::string stratified = "auto";  // auto | true | false; auto means true for the rank loss
  std::string imbalance = "none";   // none | binary | linear
  std::size_t class_a = 3, class_b = 5;
  double ratio = 5.0;
  std::size_t unit = 100;
  std::size_t crop = 1;
  std::vector<std::size_t> clouds_train{500, 100}, clouds_test{500, 100};
  double clouds_separation = 1.5;

  std::string arch = "gp-small";
  std::string layers;  // inline descriptors; overrides arch
  std::size_t classes = 0;
  bool short_circuit = false;

  std::string loss = "xe";  // xe | rank | composite
  double tau = 1.0;
  double d = 1.0;

  std::map<std::string, double> mask_p;  // by tag
  ScalingConvention convention = ScalingConvention::rescaled;

  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: no limit
  double lr = 0.05, momentum = 0.9, weight_decay = 1e-4;

  std::uint64_t seed_init = 0, seed_data = 1, seed_mask = 2;

  bool use_stratified() const { return stratified == "true" || (stratified == "auto" && loss == "rank"); }
};

// Every recognized key with its default value.
const ConfigMap& config_defaults();

// Defaults overlaid with `user`. Unknown keys and bad values throw ConfigError.
ConfigMap resolve_config_map(const ConfigMap& user);
TrainConfig parse_train_config(const ConfigMap& resolved);

// "2.4:20, 2.5:20" -> class specs labelled in order.
std::vector<GpClassSpec> parse_scales(const std::string& text);
std::string format_scales(const std::vector<GpClassSpec>& specs);

}  // namespace backdrop
