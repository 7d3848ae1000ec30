#include <benchmark/benchmark.h>

#include <random>

#include "beat/attacks.hpp"
#include "beat/trainers.hpp"

namespace {

const beat::SynthDataset& data() {
  static const beat::SynthDataset d = beat::synth_generate(beat::SynthConfig{}, 1);
  return d;
}

const beat::BaseClassifier& model() {
  static const beat::BaseClassifier m = [] {
    beat::StandardTrainConfig cfg;
    cfg.epochs = 10;
    return beat::train_standard(beat::BaseArch{}, data().train, cfg);
  }();
  return m;
}

void BM_LogitsBatch(benchmark::State& state) {
  model();
  std::vector<const beat::Motion*> ms;
  for (std::size_t i = 0; i < static_cast<std::size_t>(state.range(0)); ++i) ms.push_back(&data().train.samples[i].motion);
  const beat::Tensor x = beat::stack_inputs(ms);
  for (auto _ : state) benchmark::DoNotOptimize(model().logits_batch(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogitsBatch)->Arg(1)->Arg(32)->Arg(256);

void BM_InputGradient(benchmark::State& state) {
  const auto& s = data().test.samples[0];
  for (auto _ : state) benchmark::DoNotOptimize(model().loss_input_gradient(s.motion, s.label));
}
BENCHMARK(BM_InputGradient);

void BM_ForwardBackward(benchmark::State& state) {
  std::vector<const beat::Motion*> ms;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 32; ++i) {
    ms.push_back(&data().train.samples[i].motion);
    labels.push_back(data().train.samples[i].label);
  }
  const beat::Tensor x = beat::stack_inputs(ms);
  for (auto _ : state) {
    beat::ad::Graph g;
    std::vector<beat::ad::Var> params;
    const beat::ad::Var logits = model().forward(g, g.constant(x), true, &params);
    const beat::ad::Var loss = beat::ad::mean(beat::ad::softmax_ce(logits, labels));
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad(params[0]));
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_AttackIterL2(benchmark::State& state) {
  const auto& s = data().test.samples[0];
  beat::AttackConfig cfg;
  cfg.iterations = 10;
  cfg.step_size = 0.0;
  std::mt19937_64 rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(beat::attack_iter_l2(model(), s.motion, s.label, cfg, rng));
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_AttackIterL2);

void BM_TrainBeatIteration(benchmark::State& state) {
  beat::BeatTrainerConfig cfg;
  cfg.iterations = 1;
  cfg.heads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(beat::train_beat(model(), data().train, cfg));
}
BENCHMARK(BM_TrainBeatIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
