#include "backdrop/config.hpp"

#include <fstream>
#include <sstream>

namespace backdrop {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

bool valid_key_part(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

double as_double(const ConfigMap& m, const std::string& key) {
  const auto& text = m.get(key);
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty()) throw ConfigError(key + ": '" + text + "' is not a number");
  return v;
}

std::uint64_t as_uint(const ConfigMap& m, const std::string& key) {
  const auto& text = m.get(key);
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty()) throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
  return v;
}

bool as_bool(const ConfigMap& m, const std::string& key) {
  const auto& text = m.get(key);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": '" + text + "' is not a boolean");
}

std::string one_of(const ConfigMap& m, const std::string& key, std::initializer_list<const char*> allowed) {
  const auto& text = m.get(key);
  std::string list;
  for (const char* a : allowed) {
    if (text == a) return text;
    list += (list.empty() ? "" : ", ") + std::string(a);
  }
  throw ConfigError(key + ": '" + text + "' is not one of " + list);
}

std::vector<std::size_t> as_uint_list(const ConfigMap& m, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(m.get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    ConfigMap one;
    one.set(key, trim(item));
    out.push_back(as_uint(one, key));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace

ConfigMap ConfigMap::parse(const std::string& text, const std::string& source) {
  ConfigMap m;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quote) {
        if (c == quote) quote = 0;
      } else if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == '#') {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key_part(section)) throw ConfigError(where + ": bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key_part(key)) throw ConfigError(where + ": bad key '" + key + "'");
    m.set(section.empty() ? key : section + "." + key, unquote(trim(line.substr(eq + 1))));
  }
  return m;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path);
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (!valid_key_part(key) || key.find('.') == std::string::npos) {
    throw ConfigError("override key '" + key + "' must be section.key");
  }
  set(key, unquote(trim(assignment.substr(eq + 1))));
}

void ConfigMap::merge(const ConfigMap& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

const std::string& ConfigMap::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string ConfigMap::dump() const {
  std::ostringstream os;
  std::string section = "\x01";
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    const std::string sec = k.substr(0, dot);
    if (sec != section) {
      os << (section == "\x01" ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    const bool needs_quotes = v.empty() || v.find('#') != std::string::npos || v != trim(v);
    os << k.substr(dot + 1) << " = " << (needs_quotes ? "\"" + v + "\"" : v) << "\n";
  }
  return os.str();
}

const ConfigMap& config_defaults() {
  static const ConfigMap defaults = ConfigMap::parse(R"(
[run]
out_dir = runs/default
eval_every = 1
eval_batch = 100

[data]
source = gptx
train = ""
test = ""
scales = ""
stratified = auto
imbalance = none
class_a = 3
class_b = 5
ratio = 5
unit = 100
crop = 1
clouds_train = 500,100
clouds_test = 500,100
clouds_separation = 1.5

[model]
arch = gp-small
layers = ""
classes = 0
short_circuit = false

[loss]
kind = xe
tau = 1
d = 1

[mask]
convention = rescaled

[optim]
batch_size = 32
epochs = 10
max_steps = 0
lr = 0.05
momentum = 0.9
weight_decay = 0.0001

[seed]
init = 0
data = 1
mask = 2
)",
                                                     "defaults");
  return defaults;
}

ConfigMap resolve_config_map(const ConfigMap& user) {
  ConfigMap merged = config_defaults();
  for (const auto& [key, value] : user.values()) {
    const bool mask_tag = key.rfind("mask.", 0) == 0 && key.size() > 5;
    if (!config_defaults().has(key) && !mask_tag) throw ConfigError("unknown config key '" + key + "'");
    merged.set(key, value);
  }
  parse_train_config(merged);  // validates every value
  return merged;
}

TrainConfig parse_train_config(const ConfigMap& m) {
  TrainConfig c;
  c.out_dir = m.get("run.out_dir");
  c.eval_every = as_uint(m, "run.eval_every");
  c.eval_batch = as_uint(m, "run.eval_batch");
  if (c.eval_every == 0 || c.eval_batch == 0) throw ConfigError("run.eval_every and run.eval_batch must be positive");

  c.data_source = one_of(m, "data.source", {"gptx", "cifar10", "pgm", "clouds"});
  c.train_path = m.get("data.train");
  c.test_path = m.get("data.test");
  try {
    c.scales = parse_scales(m.get("data.scales"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("data.scales: ") + e.what());
  }
  c.stratified = one_of(m, "data.stratified", {"auto", "true", "false"});
  c.imbalance = one_of(m, "data.imbalance", {"none", "binary", "linear"});
  c.class_a = as_uint(m, "data.class_a");
  c.class_b = as_uint(m, "data.class_b");
  c.ratio = as_double(m, "data.ratio");
  c.unit = as_uint(m, "data.unit");
  c.crop = as_uint(m, "data.crop");
  c.clouds_train = as_uint_list(m, "data.clouds_train");
  c.clouds_test = as_uint_list(m, "data.clouds_test");
  c.clouds_separation = as_double(m, "data.clouds_separation");
  if (c.crop == 0) throw ConfigError("data.crop must be at least 1");

  c.arch = m.get("model.arch");
  c.layers = m.get("model.layers");
  c.classes = as_uint(m, "model.classes");
  c.short_circuit = as_bool(m, "model.short_circuit");

  c.loss = one_of(m, "loss.kind", {"xe", "rank", "composite"});
  c.tau = as_double(m, "loss.tau");
  c.d = as_double(m, "loss.d");
  if (!(c.tau > 0) || !(c.d > 0)) throw ConfigError("loss.tau and loss.d must be positive");

  for (const auto& [key, value] : m.values()) {
    if (key.rfind("mask.", 0) != 0 || key == "mask.convention") continue;
    const double p = as_double(m, key);
    check_drop_probability(p);
    c.mask_p[key.substr(5)] = p;
  }
  c.convention = parse_scaling_convention(m.get("mask.convention"));

  c.batch_size = as_uint(m, "optim.batch_size");
  c.epochs = as_uint(m, "optim.epochs");
  c.max_steps = as_uint(m, "optim.max_steps");
  c.lr = as_double(m, "optim.lr");
  c.momentum = as_double(m, "optim.momentum");
  c.weight_decay = as_double(m, "optim.weight_decay");
  if (c.batch_size == 0) throw ConfigError("optim.batch_size must be at least 1");
  if (!(c.lr > 0)) throw ConfigError("optim.lr must be positive");
  if (c.momentum < 0 || c.weight_decay < 0) throw ConfigError("optim.momentum and optim.weight_decay must be >= 0");

  c.seed_init = as_uint(m, "seed.init");
  c.seed_data = as_uint(m, "seed.data");
  c.seed_mask = as_uint(m, "seed.mask");
  return c;
}

std::vector<GpClassSpec> parse_scales(const std::string& text) {
  std::vector<GpClassSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("'" + item + "' should be ell_small:ell_large");
    try {
      out.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)),
                     static_cast<std::uint16_t>(out.size())});
    } catch (const std::exception&) {
      throw std::invalid_argument("'" + item + "' is not a pair of numbers");
    }
  }
  return out;
}

std::string format_scales(const std::vector<GpClassSpec>& specs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < specs.size(); ++i) os << (i ? "," : "") << specs[i].ell_small << ":" << specs[i].ell_large;
  return os.str();
}

}  // namespace backdrop
