#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "backdrop/gradcheck.hpp"
#include "backdrop/layers.hpp"
#include "backdrop/mask.hpp"
#include "backdrop/ops.hpp"
#include "oracles.hpp"

using namespace backdrop;

namespace {

using Bits = std::vector<std::uint8_t>;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(shape, std::move(v));
}

}  // namespace

TEST_CASE("bernoulli_keep_mask") {
  std::mt19937_64 rng(3);
  SUBCASE("p = 0 keeps everything") {
    for (int i = 0; i < 20; ++i) CHECK(bernoulli_keep_mask(5, 0.0, rng) == Bits(5, 1));
  }
  SUBCASE("single entry is always kept") {
    for (double p : {0.1, 0.5, 0.99}) CHECK(bernoulli_keep_mask(1, p, rng) == Bits{1});
  }
  SUBCASE("kept fraction matches 1 - p") {
    // 99% binomial interval for n = 10000, q = 0.25 is +-0.0112; the bound is looser.
    const auto keep = bernoulli_keep_mask(10000, 0.75, rng);
    const double frac = std::accumulate(keep.begin(), keep.end(), 0.0) / 10000.0;
    CHECK(std::abs(frac - 0.25) < 0.02);
  }
  SUBCASE("never empty even at extreme p") {
    for (int i = 0; i < 200; ++i) {
      const auto keep = bernoulli_keep_mask(4, 0.999, rng);
      CHECK(std::count(keep.begin(), keep.end(), 1) >= 1);
    }
  }
  SUBCASE("invalid probabilities") {
    CHECK_THROWS_AS(bernoulli_keep_mask(3, 1.0, rng), ConfigError);
    CHECK_THROWS_AS(bernoulli_keep_mask(3, -0.1, rng), ConfigError);
  }
}

TEST_CASE("mask_backward_batch examples") {
  CHECK(mask_backward_batch(std::vector<double>{1, 2, 3, 4}, Bits{1, 0, 1, 0}, 0.5) ==
        std::vector<double>{2, 0, 6, 0});
  CHECK(mask_backward_batch(std::vector<double>{1, 2, 3, 4}, Bits{1, 1, 1, 1}, 0.5) ==
        std::vector<double>{1, 2, 3, 4});
  CHECK(mask_backward_batch(std::vector<double>{1, 2}, Bits{1, 0}, 0.5, ScalingConvention::rescaled_keep_prob) ==
        std::vector<double>{1, 0});
  SUBCASE("rows broadcast over trailing values") {
    CHECK(mask_backward_batch(std::vector<double>{1, 1, 2, 2}, Bits{0, 1}, 0.3) == std::vector<double>{0, 0, 4, 4});
  }
  SUBCASE("empty mask is an invariant violation") {
    CHECK_THROWS_AS(mask_backward_batch(std::vector<double>{1, 2}, Bits{0, 0}, 0.5), std::logic_error);
  }
}

TEST_CASE("mask_backward_spatial examples") {
  SUBCASE("1x1 lattice leaves the gradient unchanged") {
    MaskingLayer layer({0.9, MaskMode::spatial}, 5);
    TapeScope scope;
    Tensor x(Shape{2, 3, 1, 1}, {1, 2, 3, 4, 5, 6}, true);
    Tensor w(Shape{2, 3, 1, 1}, {1, -1, 2, 0.5, 3, -2});
    backward(sum(layer.forward(x) * w));
    CHECK(layer.last_mask() == Bits{1, 1});
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, -1, 2, 0.5, 3, -2});
  }
  SUBCASE("2x2 lattice with two kept sites doubles them") {
    const std::vector<double> g(4, 1.0);
    CHECK(mask_backward_spatial(g, Shape{1, 1, 2, 2}, Bits{1, 0, 0, 1}, 0.5) == std::vector<double>{2, 0, 0, 2});
  }
  SUBCASE("mask is shared across channels and rescaled per sample") {
    const std::vector<double> g(16, 1.0);  // (2, 2, 2, 2)
    const auto out = mask_backward_spatial(g, Shape{2, 2, 2, 2}, Bits{1, 0, 0, 0, 1, 1, 1, 0}, 0.5);
    const double third = 4.0 / 3.0;
    CHECK(out == std::vector<double>{4, 0, 0, 0, 4, 0, 0, 0, third, third, third, 0, third, third, third, 0});
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(mask_backward_spatial(std::vector<double>(4, 1.0), Shape{1, 1, 2, 2}, Bits{1, 0, 1}, 0.5),
                    ShapeError);
  }
  SUBCASE("lattice sum is unbiased over all 15 nonempty 2x2 masks") {
    const std::vector<double> g{0.3, -1.2, 2.5, 0.7};
    for (double p : {0.25, 0.5, 0.9}) {
      double expected_sum = 0.0;
      for (const auto& m : oracle::nonempty_masks(4, p)) {
        const auto out = mask_backward_spatial(g, Shape{1, 1, 2, 2}, m.keep, p);
        expected_sum += m.probability * std::accumulate(out.begin(), out.end(), 0.0);
      }
      CHECK(expected_sum == doctest::Approx(std::accumulate(g.begin(), g.end(), 0.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("effective batch size") {
  CHECK(effective_batch_size(2048, 0.94) == doctest::Approx(122.88).epsilon(1e-12));
  CHECK(effective_batch_size(32, 0.0) == 32.0);
  CHECK(effective_batch_size(64, 0.5) == 32.0);
}

TEST_CASE("mask forward is the identity") {
  std::mt19937_64 rng(17);
  Tensor v = random_tensor({4, 3}, rng);
  for (double p : {0.0, 0.5, 0.94}) {
    MaskingLayer layer({p, MaskMode::batch}, 1);
    CHECK(values(layer.forward(v)) == values(v));
  }
  MaskingLayer a({0.7, MaskMode::spatial}, 1), b({0.2, MaskMode::spatial}, 2);
  Tensor img = random_tensor({2, 3, 4, 4}, rng);
  CHECK(values(b.forward(a.forward(img))) == values(img));
  CHECK(a.last_mask().size() == 2 * 16);
}

TEST_CASE("a fresh mask is drawn on every forward") {
  MaskingLayer layer({0.5, MaskMode::batch}, 99);
  Tensor v = Tensor::zeros({64, 1});
  layer.forward(v);
  const Bits first = layer.last_mask();
  layer.forward(v);
  CHECK(layer.last_mask() != first);
}

TEST_CASE("conditional unbiasedness by exact enumeration") {
  const std::vector<double> g{0.4, -1.7, 2.2, 0.9};
  for (std::size_t n = 1; n <= 4; ++n) {
    const std::vector<double> gn(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n));
    for (double p : {0.25, 0.5, 0.9}) {
      std::vector<double> expectation(n, 0.0), keep_prob_expectation(n, 0.0);
      for (const auto& m : oracle::nonempty_masks(n, p)) {
        const auto out = mask_backward_batch(gn, m.keep, p);
        const auto alt = mask_backward_batch(gn, m.keep, p, ScalingConvention::rescaled_keep_prob);
        for (std::size_t i = 0; i < n; ++i) {
          expectation[i] += m.probability * out[i];
          keep_prob_expectation[i] += m.probability * alt[i];
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(expectation[i] - gn[i]) < 1e-10);
        // The keep-probability convention is biased by exactly (1 - p).
        CHECK(std::abs(keep_prob_expectation[i] - (1.0 - p) * gn[i]) < 1e-10);
      }
    }
  }
}

TEST_CASE("l1 norm is preserved for constant-magnitude gradients") {
  std::mt19937_64 rng(8);
  const std::vector<double> g{1.5, -1.5, 1.5, 1.5, -1.5, -1.5};
  for (int trial = 0; trial < 20; ++trial) {
    const auto keep = bernoulli_keep_mask(g.size(), 0.6, rng);
    const auto out = mask_backward_batch(g, keep, 0.6);
    double l1_in = 0, l1_out = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      l1_in += std::abs(g[i]);
      l1_out += std::abs(out[i]);
    }
    CHECK(l1_out == doctest::Approx(l1_in).epsilon(1e-14));
  }
}

TEST_CASE("fixed-mask surrogate matches the backdrop gradient") {
  std::mt19937_64 rng(21);
  SUBCASE("batch mask in front of a nonlinear loss") {
    Tensor x = random_tensor({4, 3}, rng);
    const Bits keep{1, 0, 1, 1};
    MaskingLayer layer({0.5, MaskMode::batch}, 0);
    layer.freeze(keep);
    auto f = [&](const Tensor& t) { return sum(sigmoid(layer.forward(t * 1.3))); };
    const Tensor anchor = x * 1.3;
    const auto w = oracle::batch_mask_weights(keep, 3);
    auto surrogate = [&](const Tensor& t) { return sum(sigmoid(oracle::anchored_rescale(t * 1.3, anchor, w))); };
    CHECK(finite_diff_check(f, surrogate, x) < 1e-4);
  }
  SUBCASE("spatial mask between two convolutions") {
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    Tensor w1 = random_tensor({3, 2, 3, 3}, rng);
    Tensor w2 = random_tensor({2, 3, 3, 3}, rng);
    Conv2dOptions same{1, 1};
    MaskingLayer layer({0.6, MaskMode::spatial}, 0);
    Bits keep(2 * 16, 0);
    for (std::size_t i = 0; i < keep.size(); i += 3) keep[i] = 1;
    layer.freeze(keep);
    auto f = [&](const Tensor& t) {
      return sum(exp(conv2d(layer.forward(relu(conv2d(t, w1, {}, same))), w2, {}, same) * 0.2));
    };
    Tensor anchor;
    {
      NoGradGuard ng;
      anchor = relu(conv2d(x, w1, {}, same));
    }
    const auto w = oracle::spatial_mask_weights(keep, anchor.shape());
    auto surrogate = [&](const Tensor& t) {
      return sum(exp(conv2d(oracle::anchored_rescale(relu(conv2d(t, w1, {}, same)), anchor, w), w2, {}, same) * 0.2));
    };
    CHECK(finite_diff_check(f, surrogate, x) < 1e-4);
  }
}

TEST_CASE("p = 0 masks leave the backward pass bitwise unchanged") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({3, 2, 4, 4}, rng);
  Tensor w = random_tensor({2, 2, 3, 3}, rng);
  auto grad_of = [&](bool with_mask) {
    TapeScope scope;
    Tensor leaf = x.detach().set_requires_grad(true);
    MaskingLayer spatial({0.0, MaskMode::spatial}, 1), batch({0.0, MaskMode::batch}, 2);
    Tensor h = relu(conv2d(leaf, w, {}, {1, 1}));
    if (with_mask) h = batch.forward(spatial.forward(h));
    backward(sum(sigmoid(h)));
    return std::vector<double>(leaf.grad().begin(), leaf.grad().end());
  };
  CHECK(grad_of(true) == grad_of(false));
}

TEST_CASE("short-circuit rows give the same result as multiplying by zero") {
  std::mt19937_64 rng(12);
  Tensor x = random_tensor({2, 3, 6, 6}, rng);
  Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Tensor b = random_tensor({4}, rng);
  Bits keep(2 * 36, 0);
  keep[3] = keep[20] = keep[40] = keep[71] = 1;
  auto run = [&](bool tiled, bool skip) {
    TapeScope scope;
    Tensor xl = x.detach().set_requires_grad(true), wl = w.detach().set_requires_grad(true);
    Tensor bl = b.detach().set_requires_grad(true);
    Conv2dOptions opt{1, 1, tiled, skip};
    MaskingLayer layer({0.9, MaskMode::spatial, ScalingConvention::rescaled, true}, 0);
    layer.freeze(keep);
    backward(sum(sigmoid(layer.forward(relu(conv2d(xl, wl, bl, opt))))));
    std::vector<double> all(xl.grad().begin(), xl.grad().end());
    all.insert(all.end(), wl.grad().begin(), wl.grad().end());
    all.insert(all.end(), bl.grad().begin(), bl.grad().end());
    return all;
  };
  const auto skipped = run(true, true);
  CHECK(skipped == run(true, false));
  const auto dense = run(false, false);
  REQUIRE(dense.size() == skipped.size());
  for (std::size_t i = 0; i < dense.size(); ++i) CHECK(skipped[i] == doctest::Approx(dense[i]).epsilon(1e-12));
}
