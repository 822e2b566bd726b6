#include "s2p/error.hpp"
#include "s2p/loss_network.hpp"
#include "s2p/losses.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace s2p;

namespace {

// Scalar oracle: explicit loops in double precision.
double brute_mse(const torch::Tensor& a, const torch::Tensor& b) {
  const auto fa = a.to(torch::kFloat64).contiguous().flatten();
  const auto fb = b.to(torch::kFloat64).contiguous().flatten();
  const double* pa = fa.data_ptr<double>();
  const double* pb = fb.data_ptr<double>();
  double sum = 0.0;
  for (int64_t i = 0; i < fa.numel(); ++i) sum += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return sum / static_cast<double>(fa.numel());
}

double brute_l1(const torch::Tensor& a, const torch::Tensor& b) {
  const auto fa = a.to(torch::kFloat64).contiguous().flatten();
  const auto fb = b.to(torch::kFloat64).contiguous().flatten();
  double sum = 0.0;
  for (int64_t i = 0; i < fa.numel(); ++i) sum += std::fabs(fa[i].item<double>() - fb[i].item<double>());
  return sum / static_cast<double>(fa.numel());
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("perceptual distance hand values") {
    // all-ones vs all-zeros over 4 elements, and a two-element difference (3, 4)
    CHECK(losses::perceptual_distance(torch::ones({1, 2, 2}), torch::zeros({1, 2, 2})).item<double>() ==
          doctest::Approx(1.0));
    const auto a = torch::tensor({3.0, 4.0}).reshape({1, 2});
    CHECK(losses::perceptual_distance(a, torch::zeros({1, 2})).item<double>() == doctest::Approx(12.5));
  }

  TEST_CASE("perceptual distance rejects shape mismatch") {
    CHECK_THROWS_AS(losses::perceptual_distance(torch::zeros({1, 2, 2}), torch::zeros({1, 2, 3})), Error);
  }

  TEST_CASE("perceptual distance is a symmetric premetric and batch-averaged") {
    torch::manual_seed(3);
    for (int i = 0; i < 10; ++i) {
      const auto a = torch::randn({3, 4, 5, 5}, torch::kFloat64);
      const auto b = torch::randn({3, 4, 5, 5}, torch::kFloat64);
      CHECK(losses::perceptual_distance(a, a).item<double>() == 0.0);
      CHECK(losses::perceptual_distance(a, b).item<double>() ==
            doctest::Approx(losses::perceptual_distance(b, a).item<double>()).epsilon(1e-12));
      CHECK(losses::perceptual_distance(a, b).item<double>() >= 0.0);
      const auto per = losses::perceptual_distance_per_sample(a, b);
      REQUIRE(per.size(0) == 3);
      CHECK(per.mean().item<double>() == doctest::Approx(brute_mse(a, b)).epsilon(1e-12));
    }
  }

  TEST_CASE("pixel cycle loss hand value and oracle") {
    CHECK(losses::pixel_cycle_loss(torch::ones({1, 3, 4, 4}), torch::full({1, 3, 4, 4}, 0.5)).item<double>() ==
          doctest::Approx(0.5));
    torch::manual_seed(4);
    const auto x = torch::rand({2, 3, 6, 6}, torch::kFloat64) * 2 - 1;
    const auto y = torch::rand({2, 3, 6, 6}, torch::kFloat64) * 2 - 1;
    CHECK(losses::pixel_cycle_loss(x, x).item<double>() == 0.0);
    CHECK(losses::pixel_cycle_loss(x, y).item<double>() == doctest::Approx(brute_l1(x, y)).epsilon(1e-12));
  }

  TEST_CASE("perceptual cycle loss averages the three taps") {
    const RunConfig cfg = test::tiny_config();
    const LossNetwork phi = build_loss_network(cfg.model.phi);
    const auto x = test::random_images(2, 64, 11);
    const auto y = test::random_images(2, 64, 12);
    CHECK(losses::perceptual_cycle_loss(x, x, phi).item<double>() == 0.0);
    const auto tx = phi.extract_taps(x);
    const auto ty = phi.extract_taps(y);
    const double expected = (brute_mse(tx.tap1, ty.tap1) + brute_mse(tx.tap2, ty.tap2) + brute_mse(tx.tap3, ty.tap3)) / 3;
    CHECK(losses::perceptual_cycle_loss(x, y, phi).item<double>() == doctest::Approx(expected).epsilon(1e-5));
  }

  TEST_CASE("adversarial closed forms") {
    const auto half = torch::full({4, 1, 6, 6}, 0.5, torch::kFloat64);
    CHECK(losses::adversarial_loss_discriminator(half, half).item<double>() ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(losses::adversarial_loss_discriminator(half, half).item<double>() == doctest::Approx(1.3863).epsilon(1e-4));
    CHECK(losses::adversarial_loss_generator(half).item<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("adversarial losses clamp saturated scores and reject non-probabilities") {
    const auto ones = torch::ones({2}, torch::kFloat64);
    const auto zeros = torch::zeros({2}, torch::kFloat64);
    const double d = losses::adversarial_loss_discriminator(zeros, ones).item<double>();
    CHECK(std::isfinite(d));
    CHECK(d == doctest::Approx(-2.0 * std::log(kProbabilityEpsilon)).epsilon(1e-6));
    CHECK(std::isfinite(losses::adversarial_loss_generator(zeros).item<double>()));
    try {
      losses::adversarial_loss_generator(torch::full({2}, 1.5));
      FAIL("expected a domain error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Domain);
    }
    CHECK_THROWS_AS(losses::adversarial_loss_discriminator(torch::full({2}, -0.1), zeros), Error);
  }

  TEST_CASE("generator loss decreases as fake scores rise") {
    double prev = INFINITY;
    for (double p = 0.05; p < 1.0; p += 0.1) {
      const double v = losses::adversarial_loss_generator(torch::full({3}, p, torch::kFloat64)).item<double>();
      CHECK(v < prev);
      prev = v;
    }
  }

  TEST_CASE("full objective weighting") {
    // adversarial terms 1, cycle terms 2 at default weights
    const LossBreakdown b = losses::full_objective({1, 1, 1, 1, 2, 2}, LossWeights{});
    CHECK(b.total == doctest::Approx(44.0));
    CHECK(b.cyc_x == 2.0);
    LossWeights w;
    w.lambda_geo = 0.0;
    CHECK(losses::full_objective({1, 1, 1, 1, 2, 2}, w).total == doctest::Approx(42.0));
  }

  TEST_CASE("full objective names the non-finite term") {
    try {
      losses::full_objective({1, 1, NAN, 1, 2, 2}, LossWeights{});
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Divergence);
      CHECK(std::string(e.what()).find("adv_geo_x") != std::string::npos);
    }
  }

  TEST_CASE("loss weights validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.lambda_cyc = 0;
    CHECK_THROWS_AS(w.validate(true), Error);
    CHECK_NOTHROW(w.validate(false));
    w.lambda_cyc = 1;
    w.lambda_patch = -1;
    CHECK_THROWS_AS(w.validate(false), Error);
  }
}
