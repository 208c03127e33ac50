#include <benchmark/benchmark.h>

#include <random>

#include "boxcap/evalsuite.hpp"
#include "boxcap/inference.hpp"
#include "boxcap/net.hpp"
#include "boxcap/neighbors.hpp"
#include "boxcap/synth.hpp"
#include "boxcap/trainer.hpp"

using namespace boxcap;

namespace {

struct Fixture {
  std::vector<dataio::Card> cards;
  textcodec::Vocabulary vocab;
  ModelConfig cfg;
  std::unique_ptr<net::CaptionModel> model;
  std::vector<net::SampleInput> batch;

  Fixture(int width, int batch_size) {
    cards = synth::synth_cards(64, 3).cards;
    vocab = trainer::build_vocabulary(cards);
    cfg.width = width;
    cfg.heads = 4;
    cfg.layers = 2;
    cfg.vocab = vocab.size();
    model = std::make_unique<net::CaptionModel>(cfg, 1);
    for (int i = 0; static_cast<int>(batch.size()) < batch_size; ++i) {
      const auto& c = cards[static_cast<std::size_t>(i) % cards.size()];
      const auto ctx = net::prepare_card(c, vocab, cfg);
      batch.push_back(net::make_sample(ctx, c, 0, net::encode_caption(c.items[0].caption, vocab, cfg), cfg));
    }
  }
};

void BM_Forward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    Tape tape;
    auto r = f.model->forward(tape, f.batch, net::MaskMode::kGeneration);
    benchmark::DoNotOptimize(r.logits.value().data());
  }
}
BENCHMARK(BM_Forward)->Args({64, 32})->Args({128, 32})->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  std::vector<std::vector<int>> targets;
  for (const auto& s : f.batch) targets.push_back(net::caption_targets(s));
  for (auto _ : state) {
    Tape tape;
    auto r = f.model->forward(tape, f.batch, net::MaskMode::kGeneration);
    Var loss = net::cg_loss(r.logits, targets);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(BM_ForwardBackward)->Args({64, 32})->Args({128, 32})->Unit(benchmark::kMillisecond);

void BM_GreedyCard(benchmark::State& state) {
  Fixture f(64, 1);
  for (auto _ : state) {
    auto caps = inference::generate_card(*f.model, f.vocab, f.cards[0]);
    benchmark::DoNotOptimize(caps.data());
  }
}
BENCHMARK(BM_GreedyCard)->Unit(benchmark::kMillisecond);

void BM_SelectNeighbors(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 0.9);
  std::vector<dataio::TextBox> boxes;
  for (int i = 0; i < state.range(0); ++i) {
    const double x = u(rng), y = u(rng);
    boxes.push_back({x, y, x + 0.1, y + 0.05});
  }
  for (auto _ : state)
    for (std::size_t i = 0; i < boxes.size(); ++i) benchmark::DoNotOptimize(encoders::select_neighbors(boxes, i));
}
BENCHMARK(BM_SelectNeighbors)->Arg(8)->Arg(64);

void BM_Metrics(benchmark::State& state) {
  const auto cards = synth::synth_cards(static_cast<std::size_t>(state.range(0)), 9).cards;
  std::vector<std::string> refs;
  std::vector<std::vector<std::string>> per_card;
  for (const auto& c : cards) {
    per_card.push_back(c.captions());
    for (const auto& s : c.captions()) refs.push_back(s);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(evalsuite::bleu_n(refs, refs, 4));
    benchmark::DoNotOptimize(evalsuite::cider(refs, refs));
    benchmark::DoNotOptimize(evalsuite::div_n(per_card, 2).score);
  }
}
BENCHMARK(BM_Metrics)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  boxcap::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
