#include <doctest.h>

#include <cmath>
#include <random>

#include "beat/error.hpp"
#include "beat/evaluation.hpp"
#include "beat/trainers.hpp"

using namespace beat;

namespace {

SynthDataset small_data(std::uint64_t seed, std::size_t per_class = 25) {
  SynthConfig cfg;
  cfg.train_per_class = per_class;
  cfg.test_per_class = 25;
  return synth_generate(cfg, seed);
}

}  // namespace

TEST_CASE("standard training") {
  const auto data = synth_generate(SynthConfig{}, 1);
  StandardTrainConfig cfg;
  cfg.seed = 3;
  TrainingTrace trace;
  const BaseClassifier model = train_standard(BaseArch{}, data.train, cfg, &trace);
  CHECK(accuracy(model, data.test) >= 95.0);
  CHECK(trace.epoch_loss.size() == cfg.epochs);
  CHECK(trace.epoch_loss.back() < trace.epoch_loss.front());

  SUBCASE("zero epochs returns the initialization") {
    StandardTrainConfig none = cfg;
    none.epochs = 0;
    CHECK(train_standard(BaseArch{}, data.train, none).params() == BaseClassifier::init(BaseArch{}, derive_seed(3, 0)).params());
  }
  SUBCASE("deterministic in seed") {
    StandardTrainConfig quick = cfg;
    quick.epochs = 2;
    CHECK(train_standard(BaseArch{}, data.train, quick).digest() == train_standard(BaseArch{}, data.train, quick).digest());
  }
  SUBCASE("mismatched architecture or data") {
    BaseArch wrong;
    wrong.classes = 5;
    CHECK_THROWS_AS(train_standard(wrong, data.train, cfg), ArchitectureError);
    Dataset empty = data.train;
    empty.samples.clear();
    CHECK_THROWS_AS(train_standard(BaseArch{}, empty, cfg), ConfigError);
  }
}

TEST_CASE("adversarial training") {
  const auto data = small_data(2);
  AtConfig cfg;
  cfg.outer.epochs = 3;
  cfg.outer.seed = 5;
  CHECK(cfg.epsilon == 0.005);
  CHECK(cfg.inner_iterations == 20);
  SUBCASE("zero budget reproduces standard training") {
    cfg.epsilon = 0.0;
    CHECK(train_at(BaseArch{}, data.train, cfg).params() == train_standard(BaseArch{}, data.train, cfg.outer).params());
  }
  SUBCASE("nonzero budget changes the trajectory") {
    CHECK(train_at(BaseArch{}, data.train, cfg).digest() != train_standard(BaseArch{}, data.train, cfg.outer).digest());
  }
  cfg.epsilon = -1.0;
  CHECK_THROWS_AS(train_at(BaseArch{}, data.train, cfg), ConfigError);
}

TEST_CASE("randomized smoothing") {
  const auto data = small_data(3);
  StandardTrainConfig opt;
  opt.epochs = 5;
  const BaseClassifier base = train_standard(BaseArch{}, data.train, opt);
  const Motion& x = data.test.samples[0].motion;
  std::mt19937_64 rng(1);

  RsConfig rs;
  rs.delta = 0.0;
  rs.draws = 7;
  CHECK(predict_rs(base, x, rs, rng) == base.predict_proba(x));

  rs.delta = 0.1;
  const auto p = predict_rs(base, x, rs, rng);
  double s = 0.0;
  for (double v : p) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("smoothed classifier is deterministic and its gradient matches differences") {
    rs.draws = 3;
    const SmoothedClassifier sc(base, rs);
    CHECK(sc.predict_proba(x) == sc.predict_proba(x));
    const Tensor g = sc.loss_input_gradient(x, data.test.samples[0].label);
    const int y = data.test.samples[0].label;
    // Mean cross-entropy over the same noise draws the classifier uses.
    auto loss = [&](const Motion& mm) {
      std::mt19937_64 r(derive_seed(rs.seed, 12));
      double total = 0.0;
      for (std::size_t d = 0; d < rs.draws; ++d)
        total -= std::log(base.predict_proba(smooth_draw(mm, rs.delta, r))[static_cast<std::size_t>(y)]);
      return total / static_cast<double>(rs.draws);
    };
    Motion m = x;
    for (std::size_t i : {0ul, 17ul, 200ul, 383ul}) {
      const double v = m.positions()[i];
      m.positions()[i] = v + 1e-5;
      const double up = loss(m);
      m.positions()[i] = v - 1e-5;
      const double down = loss(m);
      m.positions()[i] = v;
      CHECK(g[i] == doctest::Approx((up - down) / 2e-5).epsilon(1e-5));
    }
  }
  SUBCASE("noise fine-tuning") {
    rs.train_with_noise = false;
    CHECK(train_rs(base, data.train, rs, opt).params() == base.params());
    rs.train_with_noise = true;
    CHECK(train_rs(base, data.train, rs, opt).digest() != base.digest());
  }
  rs.draws = 0;
  CHECK_THROWS_AS(predict_rs(base, x, rs, rng), ConfigError);
}

TEST_CASE("BEAT training") {
  const auto data = small_data(4);
  StandardTrainConfig opt;
  opt.seed = 4;
  const BaseClassifier base = train_standard(BaseArch{}, data.train, opt);
  const std::string digest = base.digest();

  BeatTrainerConfig cfg;
  CHECK(cfg.heads == 5);
  CHECK(cfg.w1 == 1.0);
  CHECK(cfg.w2 == 0.3);
  CHECK(cfg.w3 == 0.1);
  CHECK(cfg.sgld.step == 0.01);
  CHECK(cfg.lambda == 1e-3);
  CHECK(cfg.negative_steps == 10);
  CHECK(cfg.adversary_steps == 10);
  CHECK(cfg.budget == 0.05);
  const auto bb = BeatTrainerConfig::blackbox_preset();
  CHECK(bb.w2 == 0.1);
  CHECK(bb.w3 == 1.0);
  CHECK(bb.budget == 0.5);
  CHECK(bb.sgahmc.step == 0.02);
  CHECK(bb.negative_steps == 2);

  cfg.seed = 9;
  cfg.heads = 2;
  cfg.iterations = 3;
  cfg.batch_negative = 8;

  SUBCASE("no iterations keeps the initial heads") {
    cfg.iterations = 0;
    const BeatEnsemble ens = train_beat(base, data.train, cfg);
    CHECK(accuracy(ens, data.test) == accuracy(base, data.test));
    std::mt19937_64 rng(derive_seed(9, 1000));
    CHECK(ens.heads()[0].params() == AppendedHead::init(4, cfg.head_init_std, rng).params());
  }
  SUBCASE("frozen base, determinism and head independence") {
    BeatTrace trace;
    const BeatEnsemble a = train_beat(base, data.train, cfg, &trace);
    CHECK(base.digest() == digest);
    CHECK(a.base_digest() == digest);
    CHECK(trace.head_loss.size() == 2);
    CHECK(trace.head_loss[0].size() == 3);
    cfg.threads = 2;
    const BeatEnsemble b = train_beat(base, data.train, cfg);
    CHECK(a.heads()[1].params() == b.heads()[1].params());
    cfg.threads = 1;
    cfg.heads = 1;
    const BeatEnsemble c = train_beat(base, data.train, cfg);
    CHECK(c.heads()[0].params() == a.heads()[0].params());
    CHECK(a.heads()[0].params() != a.heads()[1].params());
  }
  SUBCASE("cross-entropy only fine-tuning keeps accuracy") {
    cfg.w2 = 0.0;
    cfg.w3 = 0.0;
    cfg.iterations = 20;
    const BeatEnsemble ens = train_beat(base, data.train, cfg);
    CHECK(accuracy(ens, data.test) >= accuracy(base, data.test) - 2.0);
  }
  SUBCASE("invalid settings") {
    cfg.heads = 0;
    CHECK_THROWS_AS(train_beat(base, data.train, cfg), ConfigError);
    cfg.heads = 1;
    cfg.w2 = -1.0;
    CHECK_THROWS_AS(train_beat(base, data.train, cfg), ConfigError);
  }
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}
