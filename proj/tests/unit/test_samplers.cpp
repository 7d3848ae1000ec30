#include <doctest.h>

#include <cmath>
#include <random>

#include "beat/error.hpp"
#include "beat/samplers.hpp"

using namespace beat;

namespace {

const auto kTopo = std::make_shared<const SkeletonTopology>(SkeletonTopology::default_toy());

GradientFn standard_normal() {
  return [](const Tensor& x) {
    Tensor g = x;
    for (double& v : g.values()) v = -v;
    return g;
  };
}

Motion random_motion(std::mt19937_64& rng) {
  Motion m(kTopo, 16);
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& v : m.positions().values()) v = n(rng);
  return m;
}

}  // namespace

TEST_CASE("sgld step") {
  std::mt19937_64 rng(1);
  const Tensor x({3}, std::vector<double>{0.5, -1.0, 2.0});
  SUBCASE("zero step leaves the point") {
    CHECK(sgld_step(x, standard_normal(), {0.0, 1.0, 1}, rng) == x);
  }
  SUBCASE("noise-free steps contract a Gaussian target") {
    Tensor cur = x;
    double prev = 1e9;
    for (int t = 0; t < 50; ++t) {
      cur = sgld_step(cur, standard_normal(), {0.5, 0.0, 1}, rng);
      double logp = 0.0;
      for (double v : cur.values()) logp -= 0.5 * v * v;
      CHECK(-logp <= prev);
      prev = -logp;
    }
    CHECK(prev < 1e-3);
  }
  SUBCASE("errors") {
    auto bad = [](const Tensor& p) {
      Tensor g = p;
      g[0] = std::nan("");
      return g;
    };
    CHECK_THROWS_AS(sgld_step(x, bad, {}, rng), NumericError);
    CHECK_THROWS_AS(sgld_step(x, [](const Tensor&) { return Tensor({2}, 0.0); }, {}, rng), ShapeError);
    CHECK_THROWS_AS(sgld_step(x, standard_normal(), {-0.1, 0.0, 1}, rng), ConfigError);
  }
  SUBCASE("defaults") {
    const SgldConfig d;
    CHECK(d.step == 0.01);
    CHECK(d.noise_std == 0.005);
    CHECK(d.steps == 10);
  }
}

TEST_CASE("persistent negative chains") {
  const BaseClassifier model = BaseClassifier::init(BaseArch{}, 2);
  const LogitModel lm(model);
  const std::size_t dim = BaseArch{}.input_dim();

  SUBCASE("deterministic in seed and buffer state") {
    std::mt19937_64 r1(5), r2(5);
    PcdBuffer b1(dim, 16, 0.05, r1), b2(dim, 16, 0.05, r2);
    CHECK(b1.items() == b2.items());
    const Tensor a = sample_negatives(lm, b1, 4, 10, {}, r1);
    const Tensor b = sample_negatives(lm, b2, 4, 10, {}, r2);
    CHECK(a == b);
    CHECK(b1.items() == b2.items());
    for (double v : a.values()) CHECK(std::isfinite(v));
  }
  SUBCASE("reinit probability one ignores the buffer") {
    std::mt19937_64 r1(6), r2(6);
    PcdBuffer b1(dim, 4, 1.0, r1), b2(dim, 4, 1.0, r2);
    for (double& v : b2.items().values()) v = 4.0;
    const Tensor a = sample_negatives(lm, b1, 3, 0, {}, r1);
    const Tensor b = sample_negatives(lm, b2, 3, 0, {}, r2);
    CHECK(a == b);
    for (double v : a.values()) CHECK(std::abs(v) <= 1.0);
  }
  SUBCASE("chains stay finite and clamped") {
    std::mt19937_64 rng(7);
    PcdBuffer buf(dim, 8, 0.0, rng);
    const Tensor out = sample_negatives(lm, buf, 8, 20, {3.0, 5.0, 20}, rng);
    for (double v : out.values()) {
      CHECK(std::isfinite(v));
      CHECK(std::abs(v) <= kMotionClamp);
    }
  }
  SUBCASE("invalid buffers") {
    std::mt19937_64 rng(8);
    CHECK_THROWS_AS(PcdBuffer(dim, 0, 0.05, rng), ConfigError);
    CHECK_THROWS_AS(PcdBuffer(dim, 4, 1.5, rng), ConfigError);
  }
}

TEST_CASE("adversary sampling") {
  const BaseClassifier model = BaseClassifier::init(BaseArch{}, 3);
  const LogitModel lm(model);
  std::mt19937_64 rng(9);
  const Motion x = random_motion(rng);

  SUBCASE("defaults") {
    const AdversaryConfig d;
    CHECK(d.budget == 0.05);
    CHECK(d.steps == 10);
    CHECK(d.distance.lambda == 1e-3);
  }
  SUBCASE("no budget and no steps returns the clean motion") {
    AdversaryConfig cfg;
    cfg.budget = 0.0;
    cfg.steps = 0;
    CHECK(sample_adversary(lm, x, 1, cfg, rng).positions() == x.positions());
  }
  SUBCASE("large lambda pulls the adversary toward the clean motion") {
    AdversaryConfig cfg;
    cfg.sgld = {1e-3, 0.005, 10};
    cfg.steps = 200;
    cfg.distance.lambda = 0.0;
    std::mt19937_64 a(10), b(10);
    const Motion free = sample_adversary(lm, x, 2, cfg, a);
    cfg.distance.lambda = 1e6;
    const Motion tied = sample_adversary(lm, x, 2, cfg, b);
    CHECK(manifold_distance(x, tied) < manifold_distance(x, free));
  }
  SUBCASE("deterministic in seed") {
    std::mt19937_64 a(11), b(11);
    CHECK(sample_adversary(lm, x, 0, {}, a).positions() == sample_adversary(lm, x, 0, {}, b).positions());
  }
  CHECK_THROWS_AS(sample_adversary(lm, x, 7, {}, rng), ConfigError);
}

TEST_CASE("sg-ahmc") {
  SUBCASE("defaults") {
    const SgahmcConfig d;
    CHECK(d.friction == 1e-5);
    CHECK(d.steps == 30);
  }
  SUBCASE("first step without noise is a preconditioned descent step") {
    SgahmcConfig cfg;
    cfg.friction = 0.0;
    SgahmcState s(2, cfg);
    std::mt19937_64 rng(1);
    std::vector<double> theta{1.0, -2.0};
    s.step(theta, {0.5, -1.0}, rng);
    // C starts at 1, so the update is sigma^2 * h.
    CHECK(theta[0] == doctest::Approx(1.0 - 1e-4 * 0.5).epsilon(1e-15));
    CHECK(theta[1] == doctest::Approx(-2.0 + 1e-4).epsilon(1e-15));
  }
  SUBCASE("preconditioner stays positive") {
    SgahmcState s(3, {});
    std::mt19937_64 rng(2);
    std::vector<double> theta{0.1, 0.2, 0.3};
    for (int t = 0; t < 500; ++t) {
      s.step(theta, {0.0, 1e-12, t % 2 ? 1.0 : -1.0}, rng);
      for (double c : s.preconditioner()) CHECK(c > 0.0);
      for (double tau : s.horizon()) CHECK(tau >= 1.0);
    }
  }
  SUBCASE("deterministic in seed") {
    auto run = [] {
      SgahmcConfig cfg;
      cfg.friction = 1.0;
      SgahmcState s(4, cfg);
      std::mt19937_64 rng(3);
      std::vector<double> theta{1.0, 1.0, 1.0, 1.0};
      for (int t = 0; t < 50; ++t) s.step(theta, theta, rng);
      return theta;
    };
    CHECK(run() == run());
  }
  SUBCASE("errors") {
    SgahmcState s(2, {});
    std::mt19937_64 rng(4);
    std::vector<double> theta{1.0, 1.0};
    CHECK_THROWS_AS(s.step(theta, {1.0}, rng), ShapeError);
    CHECK_THROWS_AS(s.step(theta, {1.0, std::nan("")}, rng), NumericError);
    SgahmcConfig bad;
    bad.step = 0.0;
    CHECK_THROWS_AS(SgahmcState(2, bad), ConfigError);
  }
}
