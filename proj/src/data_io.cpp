#include "backdrop/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "backdrop/gp_texture.hpp"
#include "backdrop/rng.hpp"

namespace backdrop {

namespace fs = std::filesystem;

std::size_t Dataset::num_classes() const {
  std::size_t n = class_names.size();
  for (auto y : labels) n = std::max(n, y + 1);
  return n;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (auto y : labels) ++counts[y];
  return counts;
}

Tensor Dataset::batch_images(const std::vector<std::size_t>& indices) const {
  const std::size_t d = image_size();
  std::vector<double> out;
  out.reserve(indices.size() * d);
  for (auto i : indices) {
    if (i >= size()) throw std::out_of_range("dataset index " + std::to_string(i) + " out of range");
    out.insert(out.end(), images.begin() + static_cast<std::ptrdiff_t>(i * d),
               images.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }
  Shape s{indices.size()};
  s.insert(s.end(), image_shape.begin(), image_shape.end());
  return Tensor(s, std::move(out));
}

std::vector<std::size_t> Dataset::batch_labels(const std::vector<std::size_t>& indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out{image_shape, {}, {}, class_names};
  const std::size_t d = image_size();
  out.images.reserve(indices.size() * d);
  for (auto i : indices) {
    out.images.insert(out.images.end(), images.begin() + static_cast<std::ptrdiff_t>(i * d),
                      images.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void Dataset::validate() const {
  if (image_shape.size() != 3) throw FormatError("dataset image shape must be (C, H, W), got " + shape_str(image_shape));
  if (images.size() != labels.size() * image_size()) {
    throw FormatError("dataset holds " + std::to_string(images.size()) + " values for " +
                      std::to_string(labels.size()) + " images of " + shape_str(image_shape));
  }
}

Dataset load_cifar10_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(is), {}};
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError(path + ": truncated record at byte offset " + std::to_string(n * kCifarRecordBytes) + " (" +
                      std::to_string(bytes.size() % kCifarRecordBytes) + " of " +
                      std::to_string(kCifarRecordBytes) + " bytes)");
  }
  Dataset ds{{3, 32, 32}, {}, {}, {}};
  ds.images.resize(n * 3072);
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t off = r * kCifarRecordBytes;
    if (bytes[off] >= 10) {
      throw FormatError(path + ": label " + std::to_string(bytes[off]) + " at byte offset " + std::to_string(off) +
                        " is not a CIFAR-10 class");
    }
    ds.labels[r] = bytes[off];
    for (std::size_t k = 0; k < 3072; ++k) ds.images[r * 3072 + k] = static_cast<float>(bytes[off + 1 + k]) / 255.0f;
  }
  return ds;
}

Dataset load_cifar10(const std::string& dir, const std::string& split) {
  std::vector<std::string> files;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
  } else if (split == "test") {
    files.push_back("test_batch.bin");
  } else {
    throw std::invalid_argument("CIFAR-10 split must be train or test, got '" + split + "'");
  }
  Dataset all{{3, 32, 32}, {}, {}, {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship",
                                   "truck"}};
  for (const auto& f : files) {
    const auto part = load_cifar10_file((fs::path(dir) / f).string());
    all.images.insert(all.images.end(), part.images.begin(), part.images.end());
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  }
  return all;
}

Dataset load_gptx(const std::string& path) {
  auto g = read_gptx(path);
  Dataset ds{{1, g.H, g.W}, std::move(g.pixels), {}, {}};
  ds.labels.assign(g.labels.begin(), g.labels.end());
  for (std::size_t c = 0; c < g.n_classes; ++c) ds.class_names.push_back(std::to_string(c));
  return ds;
}

namespace {

// Next header token of a PGM, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& is, const std::string& path) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += static_cast<char>(c);
  }
  if (tok.empty()) throw FormatError(path + ": truncated PGM header");
  return tok;
}

std::vector<float> read_pgm(const std::string& path, std::size_t& H, std::size_t& W) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "'");
  if (pgm_token(is, path) != "P5") throw FormatError(path + ": not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pgm_token(is, path));
    h = std::stoul(pgm_token(is, path));
    maxval = std::stoul(pgm_token(is, path));
  } catch (const std::logic_error&) {
    throw FormatError(path + ": malformed PGM header");
  }
  if (maxval == 0 || maxval > 255) throw FormatError(path + ": only 8-bit PGM is supported");
  std::vector<unsigned char> raw(w * h);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(path + ": expected " + std::to_string(raw.size()) + " pixel bytes");
  }
  H = h;
  W = w;
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i]) / static_cast<float>(maxval);
  return out;
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by[ds.labels[i]].push_back(i);
  return by;
}

}  // namespace

Dataset load_pgm_folder(const std::string& dir) {
  if (!fs::is_directory(dir)) throw FormatError("'" + dir + "' is not a directory");
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());
  Dataset ds;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    ds.class_names.push_back(classes[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[c]))
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::size_t H = 0, W = 0;
      auto px = read_pgm(f.string(), H, W);
      if (ds.image_shape.empty()) ds.image_shape = {1, H, W};
      if (ds.image_shape != Shape{1, H, W}) {
        throw FormatError(f.string() + ": size " + std::to_string(H) + "x" + std::to_string(W) +
                          " differs from earlier images " + shape_str(ds.image_shape));
      }
      ds.images.insert(ds.images.end(), px.begin(), px.end());
      ds.labels.push_back(c);
    }
  }
  if (ds.labels.empty()) throw FormatError("'" + dir + "' contains no <class>/<name>.pgm images");
  return ds;
}

Dataset truncate_binary_imbalance(const Dataset& ds, std::size_t class_a, std::size_t class_b, double ratio,
                                  std::uint64_t seed) {
  if (!(ratio >= 1.0)) throw std::invalid_argument("imbalance ratio must be at least 1");
  if (class_a == class_b) throw std::invalid_argument("imbalance classes must differ");
  const auto by = indices_by_class(ds);
  auto members = [&](std::size_t c) -> const std::vector<std::size_t>& {
    if (c >= by.size() || by[c].empty()) throw std::invalid_argument("class " + std::to_string(c) + " is absent");
    return by[c];
  };
  const auto& a = members(class_a);
  auto b = members(class_b);
  std::mt19937_64 rng(seed);
  std::shuffle(b.begin(), b.end(), rng);
  b.resize(std::min(b.size(), static_cast<std::size_t>(std::floor(static_cast<double>(a.size()) / ratio))));
  std::vector<std::size_t> keep(a);
  keep.insert(keep.end(), b.begin(), b.end());
  std::sort(keep.begin(), keep.end());
  Dataset out = ds.subset(keep);
  for (auto& y : out.labels) y = y == class_a ? 1 : 0;
  out.class_names.clear();
  if (!ds.class_names.empty()) out.class_names = {ds.class_names.at(class_b), ds.class_names.at(class_a)};
  return out;
}

Dataset truncate_linear_imbalance(const Dataset& ds, std::size_t unit, std::uint64_t seed) {
  if (unit == 0) throw std::invalid_argument("truncation unit must be positive");
  auto by = indices_by_class(ds);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < by.size(); ++c) {
    const std::size_t want = unit * (c + 1);
    if (by[c].size() < want) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(by[c].size()) +
                                  " samples, needs " + std::to_string(want));
    }
    std::shuffle(by[c].begin(), by[c].end(), rng);
    keep.insert(keep.end(), by[c].begin(), by[c].begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

Dataset crop_tiles(const Dataset& ds, std::size_t s) {
  const std::size_t C = ds.image_shape.at(0), H = ds.image_shape.at(1), W = ds.image_shape.at(2);
  if (s == 0 || H % s != 0 || W % s != 0) {
    throw std::invalid_argument("cannot split " + std::to_string(H) + "x" + std::to_string(W) + " images into a " +
                                std::to_string(s) + "x" + std::to_string(s) + " grid");
  }
  const std::size_t h = H / s, w = W / s;
  Dataset out{{C, h, w}, {}, {}, ds.class_names};
  out.images.reserve(ds.images.size());
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const float* img = ds.images.data() + n * C * H * W;
    for (std::size_t ti = 0; ti < s; ++ti)
      for (std::size_t tj = 0; tj < s; ++tj) {
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < h; ++i) {
            const float* row = img + (c * H + ti * h + i) * W + tj * w;
            out.images.insert(out.images.end(), row, row + w);
          }
        out.labels.push_back(ds.labels[n]);
      }
  }
  return out;
}

Dataset make_gaussian_clouds(const std::vector<std::size_t>& per_class, double separation, std::uint64_t seed) {
  if (per_class.size() < 2) throw std::invalid_argument("gaussian clouds need at least two classes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds{{2, 1, 1}, {}, {}, {}};
  const double r = separation / 2.0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const double angle = per_class.size() == 2 ? (c == 0 ? M_PI : 0.0)
                                               : 2.0 * M_PI * static_cast<double>(c) / per_class.size();
    const double mx = r * std::cos(angle), my = r * std::sin(angle);
    for (std::size_t k = 0; k < per_class[c]; ++k) {
      const double x = mx + normal(rng);
      const double y = my + normal(rng);
      ds.images.push_back(static_cast<float>(x));
      ds.images.push_back(static_cast<float>(y));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool stratified)
    : ds_(ds), batch_size_(batch_size), seed_(seed), stratified_(stratified) {
  if (batch_size_ == 0) throw std::invalid_argument("batch size must be at least 1");
  if (stratified_) {
    std::size_t present = 0;
    for (auto n : ds_.class_counts()) present += n > 0;
    if (batch_size_ < present) {
      throw std::invalid_argument("stratified batching needs a batch size of at least " + std::to_string(present) +
                                  " (classes present), got " + std::to_string(batch_size_));
    }
  }
}

std::vector<std::vector<std::size_t>> BatchIterator::next_epoch() {
  std::mt19937_64 rng(derive_seed({seed_, epoch_++}));
  std::vector<std::size_t> order;
  if (!stratified_) {
    order.resize(ds_.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    // Class members are spread evenly over [0, 1) with a random phase per
    // class; sorting by position interleaves the classes in proportion.
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    std::vector<std::tuple<double, std::size_t, std::size_t>> keyed;
    auto by = indices_by_class(ds_);
    for (std::size_t c = 0; c < by.size(); ++c) {
      std::shuffle(by[c].begin(), by[c].end(), rng);
      const double u = phase(rng);
      const double n = static_cast<double>(by[c].size());
      for (std::size_t k = 0; k < by[c].size(); ++k) keyed.emplace_back((static_cast<double>(k) + u) / n, c, by[c][k]);
    }
    std::sort(keyed.begin(), keyed.end());
    for (const auto& t : keyed) order.push_back(std::get<2>(t));
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size_) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size_)));
  }
  return batches;
}

}  // namespace backdrop
