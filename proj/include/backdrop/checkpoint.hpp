#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "backdrop/format_error.hpp"
#include "backdrop/model.hpp"
#include "backdrop/optim.hpp"

namespace backdrop {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to rebuild a model and resume its optimizer. Values are
// stored as little-endian float64 so a round trip is bitwise.
struct Checkpoint {
  std::string arch_name;
  std::string layers;  // descriptor text of the architecture
  Shape input_shape;   // (C, H, W)
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, std::vector<double>>> params;
  std::vector<BatchNormState> norms;
  std::vector<std::vector<double>> velocities;
};

Checkpoint capture_checkpoint(const Model& model, const Sgd* optimizer = nullptr,
                              std::map<std::string, std::string> meta = {});

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies parameters and running statistics into `model`; throws FormatError
// when the architecture name, layers or parameter shapes differ.
void restore_into(Model& model, const Checkpoint& ckpt);

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, BuildOptions options = {});

}  // namespace backdrop
