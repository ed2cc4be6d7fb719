#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "backdrop/checkpoint.hpp"
#include "backdrop/config.hpp"
#include "backdrop/data_io.hpp"
#include "backdrop/losses.hpp"
#include "backdrop/metrics.hpp"
#include "backdrop/model.hpp"

namespace backdrop {

struct Datasets {
  Dataset train, test;
};

// Reads or synthesizes the train and test sets named by the config, then
// applies the imbalance and crop options.
Datasets load_datasets(const TrainConfig& cfg);

// Mask tags consumed by the loss rather than the network: "p" on the rank
// scores, "p_X" and "p_D" on the two composite terms.
std::vector<std::string> loss_mask_tags(const std::string& loss);

// Preset or inline architecture sized for `classes`, with configured mask
// probabilities applied. Tags matching neither the network nor the loss throw
// ConfigError.
std::unique_ptr<Model> build_model_from_config(const TrainConfig& cfg, const Shape& input_shape,
                                               std::size_t classes);

// What evaluation needs beyond the model; stored in checkpoint metadata.
struct EvalOptions {
  std::string loss = "xe";
  double tau = 1.0;
  double d = 1.0;
  std::vector<GpClassSpec> scales;
  std::size_t batch_size = 32;  // for the batch-averaged distance
  std::size_t eval_batch = 100;
  std::uint64_t seed_data = 1;

  static EvalOptions from(const TrainConfig& cfg);
  std::map<std::string, std::string> to_meta() const;
  static EvalOptions from_meta(const std::map<std::string, std::string>& meta);
};

// Test-split metrics: loss, accuracy, auc (two classes), accuracy_small and
// accuracy_large (scales set), dist_dataset and dist_batch (composite). The
// model runs in eval mode without masks or tape.
std::vector<std::pair<std::string, double>> evaluate(Model& model, const Dataset& data, const EvalOptions& options);

// Checkpoint variant; throws std::invalid_argument if the image shape differs.
std::vector<std::pair<std::string, double>> evaluate(const Checkpoint& ckpt, const Dataset& data);

struct TrainResult {
  MetricsLog metrics;
  Checkpoint checkpoint;
  std::size_t steps = 0;
  double wall_seconds = 0;  // kept out of metrics so runs compare byte for byte
};

// Momentum SGD with per-step masks. Metrics per eval point: test split from
// evaluate(), train split with the mean step loss and its components. Epoch 0
// holds one "ebs.<tag>" row per mask.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& test_set);

// Resolves `user` over the defaults, loads data, trains and writes
// metrics.csv, config.resolved, checkpoint.bkdp and curves.svg into out_dir.
TrainResult run_experiment(const ConfigMap& user);

}  // namespace backdrop
