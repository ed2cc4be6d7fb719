#include "backdrop/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "backdrop/layers.hpp"
#include "backdrop/losses.hpp"
#include "backdrop/ops.hpp"

namespace backdrop {

double finite_diff_check(const ScalarFn& f, const Tensor& x, double eps) { return finite_diff_check(f, f, x, eps); }

double finite_diff_check(const ScalarFn& f, const ScalarFn& reference, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  std::vector<double> analytic;
  {
    TapeScope scope;
    Tensor leaf = x.detach().set_requires_grad(true);
    Tensor y = f(leaf);
    if (y.numel() != 1 || !std::isfinite(y.item())) {
      throw std::domain_error("finite_diff_check: f(x) must be a finite scalar");
    }
    scope.tape().backward(y);
    if (leaf.has_grad()) {
      analytic.assign(leaf.grad().begin(), leaf.grad().end());
    } else {
      analytic.assign(x.numel(), 0.0);
    }
  }
  NoGradGuard no_grad;
  double worst = 0.0;
  std::vector<double> base(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto probe = [&](double delta) {
      std::vector<double> shifted = base;
      shifted[i] += delta;
      const double v = reference(Tensor(x.shape(), std::move(shifted))).item();
      if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: non-finite f near x");
      return v;
    };
    const double central = (probe(eps) - probe(-eps)) / (2.0 * eps);
    const double err = std::abs(analytic[i] - central) / (std::abs(analytic[i]) + std::abs(central) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                     double min_abs = 0.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do {
      x = dist(rng);
    } while (std::abs(x) < min_abs);
  }
  return Tensor(shape, std::move(v));
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Contracts a layer output with fixed random weights so every output entry matters.
Tensor project(const Tensor& y, const Tensor& weights) { return sum(y * weights); }

struct Case {
  std::string name;
  std::function<double(std::mt19937_64&)> run;
};

std::vector<Case> suite_cases() {
  std::vector<Case> cases;
  cases.push_back({"conv2d", [](std::mt19937_64& rng) {
                     const std::size_t B = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
                     const std::size_t H = pick(rng, 3, 4), W = pick(rng, 3, 4), k = pick(rng, 1, 3);
                     Conv2dOptions opt;
                     opt.stride = pick(rng, 1, 2);
                     opt.padding = pick(rng, 0, 1);
                     const std::size_t ho = conv_output_extent(H, k, opt.stride, opt.padding);
                     const std::size_t wo = conv_output_extent(W, k, opt.stride, opt.padding);
                     Tensor x = random_tensor({B, cin, H, W}, rng);
                     Tensor w = random_tensor({cout, cin, k, k}, rng);
                     Tensor b = random_tensor({cout}, rng);
                     Tensor r = random_tensor({B, cout, ho, wo}, rng);
                     double e = finite_diff_check([&](const Tensor& t) { return project(conv2d(t, w, b, opt), r); }, x);
                     e = std::max(e, finite_diff_check([&](const Tensor& t) { return project(conv2d(x, t, b, opt), r); }, w));
                     e = std::max(e, finite_diff_check([&](const Tensor& t) { return project(conv2d(x, w, t, opt), r); }, b));
                     return e;
                   }});
  cases.push_back({"batchnorm", [](std::mt19937_64& rng) {
                     const std::size_t B = pick(rng, 2, 3), C = pick(rng, 1, 3), H = pick(rng, 1, 3), W = pick(rng, 1, 3);
                     Tensor x = random_tensor({B, C, H, W}, rng);
                     Tensor gamma = random_tensor({C}, rng, 0.5, 1.5);
                     Tensor beta = random_tensor({C}, rng);
                     Tensor r = random_tensor({B, C, H, W}, rng);
                     auto bn = [&](const Tensor& in, const Tensor& s, const Tensor& t) {
                       BatchNormState state;
                       return project(batchnorm(in, s, t, state, NormMode::train), r);
                     };
                     double e = finite_diff_check([&](const Tensor& t) { return bn(t, gamma, beta); }, x);
                     e = std::max(e, finite_diff_check([&](const Tensor& t) { return bn(x, t, beta); }, gamma));
                     e = std::max(e, finite_diff_check([&](const Tensor& t) { return bn(x, gamma, t); }, beta));
                     return e;
                   }});
  cases.push_back({"relu", [](std::mt19937_64& rng) {
                     const Shape shape{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
                     Tensor x = random_tensor(shape, rng, -1.0, 1.0, 0.05);
                     Tensor r = random_tensor(shape, rng);
                     return finite_diff_check([&](const Tensor& t) { return project(relu(t), r); }, x);
                   }});
  cases.push_back({"maxpool2d", [](std::mt19937_64& rng) {
                     const std::size_t k = pick(rng, 2, 3), s = pick(rng, 1, 2);
                     const Shape shape{pick(rng, 1, 2), pick(rng, 1, 3), 4, 4};
                     Tensor x = random_tensor(shape, rng);
                     const std::size_t o = conv_output_extent(4, k, s, 0);
                     Tensor r = random_tensor({shape[0], shape[1], o, o}, rng);
                     return finite_diff_check([&](const Tensor& t) { return project(maxpool2d(t, k, s), r); }, x);
                   }});
  cases.push_back({"global_avg_pool", [](std::mt19937_64& rng) {
                     const Shape shape{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
                     Tensor x = random_tensor(shape, rng);
                     Tensor r = random_tensor({shape[0], shape[1]}, rng);
                     return finite_diff_check([&](const Tensor& t) { return project(global_avg_pool(t), r); }, x);
                   }});
  cases.push_back({"softmax_cross_entropy", [](std::mt19937_64& rng) {
                     const std::size_t B = pick(rng, 1, 4), C = pick(rng, 2, 5);
                     Tensor logits = random_tensor({B, C}, rng, -2.0, 2.0);
                     std::vector<std::size_t> labels(B);
                     for (auto& y : labels) y = pick(rng, 0, C - 1);
                     return finite_diff_check(
                         [&](const Tensor& t) { return softmax_cross_entropy(t, labels).value; }, logits);
                   }});
  cases.push_back({"rank_statistic_loss", [](std::mt19937_64& rng) {
                     const std::size_t n = pick(rng, 2, 8);
                     Tensor scores = random_tensor({n}, rng, -2.0, 2.0);
                     std::vector<std::size_t> labels(n);
                     for (auto& y : labels) y = pick(rng, 0, 1);
                     labels[0] = 1;
                     labels[1] = 0;
                     const double tau = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
                     return finite_diff_check(
                         [&](const Tensor& t) { return rank_statistic_loss(t, labels, tau).value; }, scores);
                   }});
  cases.push_back({"latent_distance_loss", [](std::mt19937_64& rng) {
                     const std::size_t B = pick(rng, 3, 8), D = pick(rng, 1, 4), C = pick(rng, 2, 3);
                     Tensor v = random_tensor({B, D}, rng);
                     std::vector<std::size_t> labels(B);
                     for (std::size_t i = 0; i < B; ++i) labels[i] = i < C ? i : pick(rng, 0, C - 1);
                     const double d = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
                     return finite_diff_check([&](const Tensor& t) { return latent_distance_loss(t, labels, d).value; },
                                              v);
                   }});
  return cases;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, int instances, double tolerance) {
  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(seed);
  for (const auto& c : suite_cases()) {
    GradCheckResult r{c.name, 0, 0.0, true};
    for (int i = 0; i < instances; ++i) {
      r.max_error = std::max(r.max_error, c.run(rng));
      ++r.instances;
    }
    r.passed = r.max_error < tolerance;
    results.push_back(r);
  }
  return results;
}

}  // namespace backdrop
