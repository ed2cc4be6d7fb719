#include "backdrop/checkpoint.hpp"

#include <fstream>

#include "binio.hpp"

namespace backdrop {

namespace {

void put_doubles(std::ostream& os, const std::vector<double>& v) {
  binio::put_uint<std::uint64_t>(os, v.size());
  for (double x : v) binio::put_f64(os, x);
}

std::vector<double> get_doubles(std::istream& is, const std::string& what) {
  const auto n = binio::get_uint<std::uint64_t>(is, what);
  if (n > (std::uint64_t{1} << 32)) throw FormatError(what + ": implausible array length " + std::to_string(n));
  std::vector<double> v(n);
  for (auto& x : v) x = binio::get_f64(is, what);
  return v;
}

}  // namespace

Checkpoint capture_checkpoint(const Model& model, const Sgd* optimizer, std::map<std::string, std::string> meta) {
  Checkpoint c{model.spec().name, to_string(model.spec()), model.input_shape(), std::move(meta), {}, {}, {}};
  for (const auto& p : model.parameters()) {
    c.params.emplace_back(p.name, std::vector<double>(p.value.data().begin(), p.value.data().end()));
  }
  c.norms = model.norm_states();
  if (optimizer) c.velocities = optimizer->velocities();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write("BKDP", 4);
  binio::put_uint<std::uint32_t>(os, kCheckpointVersion);
  binio::put_string(os, c.arch_name);
  binio::put_string(os, c.layers);
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.input_shape.size()));
  for (auto d : c.input_shape) binio::put_uint<std::uint64_t>(os, d);
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    binio::put_string(os, k);
    binio::put_string(os, v);
  }
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.params.size()));
  for (const auto& [name, values] : c.params) {
    binio::put_string(os, name);
    put_doubles(os, values);
  }
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.norms.size()));
  for (const auto& n : c.norms) {
    put_doubles(os, n.running_mean);
    put_doubles(os, n.running_var);
  }
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.velocities.size()));
  for (const auto& v : c.velocities) put_doubles(os, v);
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "'");
  char magic[4] = {};
  if (!is.read(magic, 4) || std::string(magic, 4) != "BKDP") throw FormatError(path + ": bad magic, not a checkpoint");
  const auto version = binio::get_uint<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": checkpoint version " + std::to_string(version) + ", this build reads version " +
                      std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.arch_name = binio::get_string(is, path);
  c.layers = binio::get_string(is, path);
  const auto rank = binio::get_uint<std::uint32_t>(is, path);
  if (rank != 3) throw FormatError(path + ": input shape must have rank 3");
  for (std::uint32_t i = 0; i < rank; ++i) c.input_shape.push_back(binio::get_uint<std::uint64_t>(is, path));
  const auto n_meta = binio::get_uint<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = binio::get_string(is, path);
    c.meta[k] = binio::get_string(is, path);
  }
  const auto n_params = binio::get_uint<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto name = binio::get_string(is, path);
    c.params.emplace_back(std::move(name), get_doubles(is, path));
  }
  const auto n_norms = binio::get_uint<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n_norms; ++i) {
    BatchNormState s;
    s.running_mean = get_doubles(is, path);
    s.running_var = get_doubles(is, path);
    c.norms.push_back(std::move(s));
  }
  const auto n_vel = binio::get_uint<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n_vel; ++i) c.velocities.push_back(get_doubles(is, path));
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes after checkpoint");
  return c;
}

void restore_into(Model& model, const Checkpoint& c) {
  if (c.arch_name != model.spec().name) {
    throw FormatError("checkpoint is for architecture '" + c.arch_name + "', model is '" + model.spec().name + "'");
  }
  if (c.layers != to_string(model.spec()) || c.input_shape != model.input_shape()) {
    throw FormatError("checkpoint layers or input shape differ from model '" + model.spec().name + "'");
  }
  auto& params = model.parameters();
  if (c.params.size() != params.size() || c.norms.size() != model.norm_states().size()) {
    throw FormatError("checkpoint parameter count differs from model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (c.params[i].first != params[i].name || c.params[i].second.size() != params[i].value.numel()) {
      throw FormatError("checkpoint parameter '" + c.params[i].first + "' does not match '" + params[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(c.params[i].second.begin(), c.params[i].second.end(), params[i].value.mutable_data().begin());
  }
  model.norm_states() = c.norms;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& c, BuildOptions options) {
  auto model = build_model(parse_arch(c.layers, c.arch_name), c.input_shape, options);
  restore_into(*model, c);
  return model;
}

}  // namespace backdrop
