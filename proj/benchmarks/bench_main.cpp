// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>
#include <fmt/format.h>

#include "lcdoc/evalagg.hpp"
#include "lcdoc/longpo.hpp"
#include "lcdoc/schedule.hpp"

namespace {

using namespace lcdoc;

void BM_PackSequences(benchmark::State& state) {
  Rng rng(1);
  std::vector<ScheduleItem> items;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    items.push_back(ScheduleItem{fmt::format("e{}", i), 1, rng.uniform_int(1, 32768), 0, "sft"});
  }
  for (auto _ : state) benchmark::DoNotOptimize(pack_sequences(items, 131072, Stage::short_stage));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PackSequences)->Arg(1000)->Arg(100000);

void BM_Levenshtein(benchmark::State& state) {
  Rng rng(2);
  auto draw = [&] {
    std::string s;
    for (std::int64_t i = 0; i < state.range(0); ++i) s.push_back(static_cast<char>('a' + rng.index(26)));
    return s;
  };
  const auto a = draw(), b = draw();
  for (auto _ : state) benchmark::DoNotOptimize(levenshtein(a, b));
}
BENCHMARK(BM_Levenshtein)->Arg(16)->Arg(256);

void BM_Anls(benchmark::State& state) {
  const std::vector<std::string> golds{"4.2 million", "4,200,000", "four point two million"};
  for (auto _ : state) benchmark::DoNotOptimize(anls("4.2 milion", golds));
}
BENCHMARK(BM_Anls);

void BM_LongpoLoss(benchmark::State& state) {
  Rng rng(3);
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 64; ++i) {
    auto draw = [&](std::size_t n) {
      std::vector<double> v(n);
      for (auto& x : v) x = -0.01 - 3.0 * rng.uniform01();
      return v;
    };
    PreferencePair p;
    p.pair_id = fmt::format("p{}", i);
    const auto nw = static_cast<std::size_t>(state.range(0));
    p.logp_theta_w_given_L = draw(nw);
    p.logp_ref_w_given_S = draw(nw);
    p.logp_theta_l_given_L = draw(nw);
    p.logp_ref_l_given_S = draw(nw);
    pairs.push_back(std::move(p));
  }
  for (auto _ : state) benchmark::DoNotOptimize(longpo_loss(pairs));
}
BENCHMARK(BM_LongpoLoss)->Arg(32)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
