#include "backdrop/arch.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "backdrop/layers.hpp"

namespace backdrop {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (seps.find(c) != std::string::npos) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::size_t to_size(const std::string& s, const std::string& layer) {
  std::size_t pos = 0;
  long long v = -1;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || v < 0) throw ArchError("layer '" + layer + "': '" + s + "' is not a non-negative integer");
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& s, const std::string& layer) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size()) throw ArchError("layer '" + layer + "': '" + s + "' is not a number");
  return v;
}

void expect_args(const std::vector<std::string>& args, std::size_t lo, std::size_t hi, const std::string& layer) {
  if (args.size() < lo || args.size() > hi) {
    throw ArchError("layer '" + layer + "': expected " + std::to_string(lo) +
                    (lo == hi ? "" : ".." + std::to_string(hi)) + " arguments, got " + std::to_string(args.size()));
  }
}

std::string layer_label(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + to_string(layer) + ")";
}

}  // namespace

LayerSpec parse_layer(const std::string& raw) {
  const std::string text = trim(raw);
  const auto open = text.find('(');
  const std::string kind = trim(text.substr(0, open));
  std::vector<std::string> args;
  if (open != std::string::npos) {
    if (text.back() != ')') throw ArchError("layer '" + text + "': missing ')'");
    const std::string inner = trim(text.substr(open + 1, text.size() - open - 2));
    if (!inner.empty()) args = split(inner, ",");
  }
  LayerSpec l;
  if (kind == "conv2d") {
    expect_args(args, 2, 4, text);
    l.kind = LayerKind::conv2d;
    l.out_channels = to_size(args[0], text);
    l.kernel = to_size(args[1], text);
    if (args.size() > 2) l.stride = to_size(args[2], text);
    if (args.size() > 3) l.padding = to_size(args[3], text);
    if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
      throw ArchError("layer '" + text + "': channels, kernel and stride must be positive");
    }
  } else if (kind == "relu" || kind == "batchnorm" || kind == "global_avg_pool") {
    expect_args(args, 0, 0, text);
    l.kind = kind == "relu" ? LayerKind::relu : kind == "batchnorm" ? LayerKind::batchnorm : LayerKind::global_avg_pool;
  } else if (kind == "maxpool") {
    expect_args(args, 1, 2, text);
    l.kind = LayerKind::maxpool;
    l.kernel = to_size(args[0], text);
    l.stride = args.size() > 1 ? to_size(args[1], text) : l.kernel;
    if (l.kernel == 0 || l.stride == 0) throw ArchError("layer '" + text + "': kernel and stride must be positive");
  } else if (kind == "mask") {
    expect_args(args, 3, 3, text);
    l.kind = LayerKind::mask;
    l.p = to_double(args[0], text);
    try {
      check_drop_probability(l.p);
      l.mode = parse_mask_mode(args[1]);
    } catch (const ConfigError& e) {
      throw ArchError("layer '" + text + "': " + e.what());
    }
    l.tag = args[2];
    if (l.tag.empty()) throw ArchError("layer '" + text + "': empty tag");
  } else if (kind == "softmax_head") {
    expect_args(args, 1, 1, text);
    l.kind = LayerKind::softmax_head;
    l.classes = to_size(args[0], text);
    if (l.classes < 2) throw ArchError("layer '" + text + "': need at least 2 classes");
  } else {
    throw ArchError("unknown layer kind '" + kind + "'");
  }
  return l;
}

ArchSpec parse_arch(const std::string& text, std::string name) {
  ArchSpec spec{std::move(name), {}};
  for (const auto& item : split(text, ";\n")) {
    if (!item.empty()) spec.layers.push_back(parse_layer(item));
  }
  if (spec.layers.empty()) throw ArchError("architecture '" + spec.name + "' has no layers");
  return spec;
}

std::string to_string(const LayerSpec& l) {
  std::ostringstream os;
  switch (l.kind) {
    case LayerKind::conv2d:
      os << "conv2d(" << l.out_channels << "," << l.kernel << "," << l.stride << "," << l.padding << ")";
      break;
    case LayerKind::relu: os << "relu"; break;
    case LayerKind::batchnorm: os << "batchnorm"; break;
    case LayerKind::maxpool: os << "maxpool(" << l.kernel << "," << l.stride << ")"; break;
    case LayerKind::mask: os << "mask(" << l.p << "," << to_string(l.mode) << "," << l.tag << ")"; break;
    case LayerKind::global_avg_pool: os << "global_avg_pool"; break;
    case LayerKind::softmax_head: os << "softmax_head(" << l.classes << ")"; break;
  }
  return os.str();
}

std::string to_string(const ArchSpec& spec) {
  std::string out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) out += (i ? "; " : "") + to_string(spec.layers[i]);
  return out;
}

std::vector<std::string> preset_names() { return {"gp-small", "heatmap-small", "cloud-small"}; }

ArchSpec preset_arch(const std::string& name, std::size_t classes) {
  std::string text;
  if (name == "gp-small") {
    // Block 2 output sees ~5 px of the 128 px input, the heatmap ~100 px.
    const std::size_t c = classes ? classes : 4;
    text =
        "conv2d(8,3,1,1); relu; batchnorm;"
        "conv2d(8,3,1,1); relu; mask(0,spatial,p_s); batchnorm; maxpool(2,2);"
        "conv2d(16,3,1,1); relu; batchnorm; maxpool(2,2);"
        "conv2d(16,3,1,1); relu; batchnorm; maxpool(2,2);"
        "conv2d(16,3,1,1); relu; batchnorm; maxpool(2,2);"
        "conv2d(16,3,1,1); relu; batchnorm; maxpool(2,2);"
        "conv2d(" + std::to_string(c) + ",1,1,0); mask(0,spatial,p_l); global_avg_pool; softmax_head(" +
        std::to_string(c) + ")";
  } else if (name == "heatmap-small") {
    const std::size_t c = classes ? classes : 10;
    text =
        "conv2d(16,3,1,1); relu; batchnorm;"
        "conv2d(16,3,2,1); relu; batchnorm;"
        "conv2d(32,3,1,1); relu; batchnorm;"
        "conv2d(32,3,2,1); relu; batchnorm;"
        "conv2d(" + std::to_string(c) + ",1,1,0); mask(0,spatial,p); global_avg_pool; softmax_head(" +
        std::to_string(c) + ")";
  } else if (name == "cloud-small") {
    const std::size_t c = classes ? classes : 2;
    text = "conv2d(16,1); relu; conv2d(16,1); relu; conv2d(" + std::to_string(c) + ",1); softmax_head(" +
           std::to_string(c) + ")";
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ArchError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return parse_arch(text, name);
}

std::vector<Shape> propagate_shapes(const ArchSpec& spec, const Shape& input) {
  if (input.size() != 4) throw ArchError("input shape must be (B, C, H, W), got " + shape_str(input));
  std::vector<Shape> shapes;
  std::set<std::string> tags;
  Shape s = input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    auto fail = [&](const std::string& why) {
      throw ArchError(layer_label(i, l) + ": " + why + " (input " + shape_str(s) + ")");
    };
    if (s.size() == 2 && l.kind != LayerKind::softmax_head && l.kind != LayerKind::mask &&
        l.kind != LayerKind::relu && l.kind != LayerKind::batchnorm) {
      fail("needs a spatial input");
    }
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (s[2] + 2 * l.padding < l.kernel || s[3] + 2 * l.padding < l.kernel) fail("kernel exceeds padded input");
        s = {s[0], l.out_channels, conv_output_extent(s[2], l.kernel, l.stride, l.padding),
             conv_output_extent(s[3], l.kernel, l.stride, l.padding)};
        break;
      }
      case LayerKind::maxpool:
        if (s[2] < l.kernel || s[3] < l.kernel) fail("window exceeds input");
        s = {s[0], s[1], conv_output_extent(s[2], l.kernel, l.stride, 0),
             conv_output_extent(s[3], l.kernel, l.stride, 0)};
        break;
      case LayerKind::global_avg_pool: s = {s[0], s[1]}; break;
      case LayerKind::mask:
        if (l.mode == MaskMode::spatial && s.size() != 4) fail("spatial mask needs an NCHW input");
        if (!tags.insert(l.tag).second) fail("duplicate mask tag '" + l.tag + "'");
        break;
      case LayerKind::softmax_head:
        if (i + 1 != spec.layers.size()) fail("softmax_head must be the last layer");
        if (s[1] != l.classes) fail("head expects " + std::to_string(l.classes) + " channels");
        s = {s[0], l.classes};
        break;
      case LayerKind::relu:
      case LayerKind::batchnorm: break;
    }
    shapes.push_back(s);
  }
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::softmax_head) {
    throw ArchError("architecture '" + spec.name + "' must end in softmax_head");
  }
  return shapes;
}

std::size_t parameter_count(const ArchSpec& spec, const Shape& input) {
  const auto shapes = propagate_shapes(spec, input);
  std::size_t total = 0;
  std::size_t channels = input[1];
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerKind::conv2d) total += l.out_channels * (channels * l.kernel * l.kernel + 1);
    if (l.kind == LayerKind::batchnorm) total += 2 * channels;
    channels = shapes[i][1];
  }
  return total;
}

}  // namespace backdrop
