#include "backdrop/gp_texture.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <stdexcept>

#include "backdrop/rng.hpp"
#include "binio.hpp"

namespace backdrop {

namespace {

using Complex = std::complex<double>;

// FFTW planning is not thread-safe; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Unnormalized 2-D DFT in place; sign is FFTW_FORWARD or FFTW_BACKWARD.
void fft2(std::vector<Complex>& data, std::size_t H, std::size_t W, int sign) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(H), static_cast<int>(W), buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

void check_grid(std::size_t H, std::size_t W, double ell) {
  if (H == 0 || W == 0) throw std::invalid_argument("gp field: empty grid");
  if (!(ell > 0.0)) throw std::invalid_argument("gp field: correlation length must be positive");
  const double limit = static_cast<double>(std::min(H, W)) / 2.0;
  if (ell >= limit) {
    throw std::invalid_argument("gp field: correlation length " + std::to_string(ell) + " px needs a grid wider than " +
                                std::to_string(2.0 * ell) + " px, got " + std::to_string(H) + "x" +
                                std::to_string(W));
  }
}

// Square root of the eigenvalues of the periodized covariance, i.e. of the DFT
// of the kernel sampled at minimum-image distances. Negative rounding noise is clamped.
std::vector<double> amplitude_spectrum(std::size_t H, std::size_t W, double ell) {
  std::vector<Complex> k(H * W);
  const double inv = 1.0 / (2.0 * ell * ell);
  for (std::size_t i = 0; i < H; ++i) {
    const double di = static_cast<double>(std::min(i, H - i));
    for (std::size_t j = 0; j < W; ++j) {
      const double dj = static_cast<double>(std::min(j, W - j));
      k[i * W + j] = std::exp(-(di * di + dj * dj) * inv);
    }
  }
  fft2(k, H, W, FFTW_FORWARD);
  std::vector<double> amp(H * W);
  for (std::size_t i = 0; i < amp.size(); ++i) amp[i] = std::sqrt(std::max(0.0, k[i].real()));
  return amp;
}

std::vector<std::uint16_t> distinct_labels(const std::vector<GpClassSpec>& specs) {
  std::set<std::uint16_t> seen;
  std::vector<std::uint16_t> out;
  for (const auto& s : specs) {
    if (!seen.insert(s.label).second) {
      throw std::invalid_argument("gp dataset: duplicate class label " + std::to_string(s.label));
    }
    out.push_back(s.label);
  }
  return out;
}

}  // namespace

ComposeMode parse_compose_mode(const std::string& text) {
  if (text == "convolve") return ComposeMode::convolve;
  if (text == "multiply") return ComposeMode::multiply;
  throw std::invalid_argument("unknown compose mode '" + text + "' (expected convolve or multiply)");
}

std::string to_string(ComposeMode mode) { return mode == ComposeMode::convolve ? "convolve" : "multiply"; }

std::vector<GpClassSpec> desk_scale_classes() { return {{2.4, 20, 0}, {2.5, 20, 1}, {2.4, 35, 2}, {2.5, 35, 3}}; }

void normalize_field(std::vector<double>& f) {
  if (f.empty()) return;
  const double n = static_cast<double>(f.size());
  double mean = 0;
  for (double v : f) mean += v;
  mean /= n;
  double var = 0;
  for (double& v : f) {
    v -= mean;
    var += v * v;
  }
  var /= n;
  if (!(var > 0.0)) throw std::domain_error("normalize_field: field is constant");
  const double s = 1.0 / std::sqrt(var);
  for (double& v : f) v *= s;
  // A second centering pass removes the residual mean left by rounding.
  double residual = 0;
  for (double v : f) residual += v;
  residual /= n;
  for (double& v : f) v -= residual;
}

std::vector<double> gp_sample_field(std::size_t H, std::size_t W, double ell, std::uint64_t seed) {
  check_grid(H, W, ell);
  const auto amp = amplitude_spectrum(H, W, ell);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Complex> z(H * W);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    z[i] = amp[i] * Complex(re, im);
  }
  fft2(z, H, W, FFTW_BACKWARD);
  std::vector<double> f(H * W);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = z[i].real();
  normalize_field(f);
  return f;
}

std::vector<double> compose_fields(const std::vector<double>& small, const std::vector<double>& large, std::size_t H,
                                   std::size_t W, ComposeMode mode) {
  if (small.size() != H * W || large.size() != H * W) {
    throw std::invalid_argument("compose_fields: fields do not match the " + std::to_string(H) + "x" +
                                std::to_string(W) + " grid");
  }
  std::vector<double> out(H * W);
  if (mode == ComposeMode::multiply) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = small[i] * large[i];
  } else {
    std::vector<Complex> a(small.begin(), small.end()), b(large.begin(), large.end());
    fft2(a, H, W, FFTW_FORWARD);
    fft2(b, H, W, FFTW_FORWARD);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
    fft2(a, H, W, FFTW_BACKWARD);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i].real();
  }
  normalize_field(out);
  return out;
}

TextureSample two_scale_sample(const GpClassSpec& spec, std::size_t H, std::size_t W, ComposeMode mode,
                               std::uint64_t seed) {
  if (!(spec.ell_small < spec.ell_large)) {
    throw std::invalid_argument("two_scale_sample: ell_small must be below ell_large");
  }
  const auto fs = gp_sample_field(H, W, spec.ell_small, derive_seed({seed, 0}));
  const auto fl = gp_sample_field(H, W, spec.ell_large, derive_seed({seed, 1}));
  return {compose_fields(fs, fl, H, W, mode), spec.label, seed};
}

void write_gptx(const std::string& path, const GptxData& data) {
  if (data.pixels.size() != data.labels.size() * data.H * data.W) {
    throw std::invalid_argument("write_gptx: pixel count does not match records");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write("GPTX", 4);
  binio::put_uint<std::uint32_t>(os, kGptxVersion);
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(data.labels.size()));
  binio::put_uint<std::uint32_t>(os, data.H);
  binio::put_uint<std::uint32_t>(os, data.W);
  binio::put_uint<std::uint16_t>(os, data.n_classes);
  const std::size_t hw = static_cast<std::size_t>(data.H) * data.W;
  for (std::size_t r = 0; r < data.labels.size(); ++r) {
    binio::put_uint<std::uint16_t>(os, data.labels[r]);
    for (std::size_t k = 0; k < hw; ++k) binio::put_f32(os, data.pixels[r * hw + k]);
  }
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

GptxData read_gptx(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "'");
  char magic[4] = {};
  if (!is.read(magic, 4) || std::string(magic, 4) != "GPTX") throw FormatError(path + ": bad magic, not a GPTX file");
  const std::string what = path;
  const auto version = binio::get_uint<std::uint32_t>(is, what);
  if (version != kGptxVersion) throw FormatError(path + ": unsupported GPTX version " + std::to_string(version));
  GptxData d;
  const auto n = binio::get_uint<std::uint32_t>(is, what);
  d.H = binio::get_uint<std::uint32_t>(is, what);
  d.W = binio::get_uint<std::uint32_t>(is, what);
  d.n_classes = binio::get_uint<std::uint16_t>(is, what);
  const std::size_t hw = static_cast<std::size_t>(d.H) * d.W;
  // Check the declared size against the file before allocating.
  const auto header_end = is.tellg();
  is.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::size_t>(is.tellg() - header_end);
  is.seekg(header_end);
  if (remaining != n * (2 + 4 * hw)) {
    throw FormatError(path + ": expected " + std::to_string(n) + " records of " + std::to_string(2 + 4 * hw) +
                      " bytes after the header, found " + std::to_string(remaining) + " bytes");
  }
  d.labels.resize(n);
  d.pixels.resize(n * hw);
  for (std::size_t r = 0; r < n; ++r) {
    d.labels[r] = binio::get_uint<std::uint16_t>(is, what);
    if (d.labels[r] >= d.n_classes) {
      throw FormatError(path + ": record " + std::to_string(r) + " has label " + std::to_string(d.labels[r]) +
                        " but the header declares " + std::to_string(d.n_classes) + " classes");
    }
    for (std::size_t k = 0; k < hw; ++k) d.pixels[r * hw + k] = binio::get_f32(is, what);
  }
  return d;
}

GpDatasetFiles make_gp_dataset(const std::vector<GpClassSpec>& specs, std::size_t H, std::size_t W,
                               std::size_t n_train_per_class, std::size_t n_test_per_class, ComposeMode mode,
                               std::uint64_t seed, const std::string& out_dir) {
  if (specs.empty()) throw std::invalid_argument("gp dataset: no class specs");
  const auto labels = distinct_labels(specs);
  const auto n_classes = static_cast<std::uint16_t>(*std::max_element(labels.begin(), labels.end()) + 1);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + out_dir + "': " + ec.message());

  auto build = [&](std::uint64_t split, std::size_t per_class) {
    GptxData d{static_cast<std::uint32_t>(H), static_cast<std::uint32_t>(W), n_classes, {}, {}};
    d.pixels.reserve(specs.size() * per_class * H * W);
    // Class-major order: all samples of the first spec, then the next.
    for (const auto& spec : specs) {
      for (std::size_t i = 0; i < per_class; ++i) {
        const auto s = two_scale_sample(spec, H, W, mode, derive_seed({seed, split, spec.label, i}));
        d.labels.push_back(s.label);
        for (double v : s.image) d.pixels.push_back(static_cast<float>(v));
      }
    }
    return d;
  };
  GpDatasetFiles files;
  files.train_path = (std::filesystem::path(out_dir) / "train.gptx").string();
  files.test_path = (std::filesystem::path(out_dir) / "test.gptx").string();
  files.train = build(0, n_train_per_class);
  files.test = build(1, n_test_per_class);
  write_gptx(files.train_path, files.train);
  write_gptx(files.test_path, files.test);
  return files;
}

std::pair<std::size_t, std::size_t> scale_labels(std::uint16_t label, const std::vector<GpClassSpec>& specs) {
  std::set<double> smalls, larges;
  std::set<std::pair<double, double>> cells;
  for (const auto& s : specs) {
    smalls.insert(s.ell_small);
    larges.insert(s.ell_large);
    if (!cells.insert({s.ell_small, s.ell_large}).second) {
      throw std::invalid_argument("scale_labels: scale pair repeated, not a factorial grid");
    }
  }
  if (cells.size() != smalls.size() * larges.size()) {
    throw std::invalid_argument("scale_labels: " + std::to_string(specs.size()) + " classes do not cover the " +
                                std::to_string(smalls.size()) + "x" + std::to_string(larges.size()) + " scale grid");
  }
  for (const auto& s : specs) {
    if (s.label != label) continue;
    return {static_cast<std::size_t>(std::distance(smalls.begin(), smalls.find(s.ell_small))),
            static_cast<std::size_t>(std::distance(larges.begin(), larges.find(s.ell_large)))};
  }
  throw std::invalid_argument("scale_labels: no class with label " + std::to_string(label));
}

void write_pgm_preview(const std::string& path, const float* values, std::size_t H, std::size_t W) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "P5\n" << W << " " << H << "\n255\n";
  for (std::size_t i = 0; i < H * W; ++i) {
    const double scaled = (static_cast<double>(values[i]) + 3.0) / 6.0 * 255.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(scaled, 0.0, 255.0)))));
  }
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace backdrop
