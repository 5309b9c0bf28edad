#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include <fmt/format.h>

#include "spirit/calibration.hpp"
#include "spirit/kernels.hpp"

using namespace spirit;
using kernels::Execution;

namespace {

struct Sample {
  std::vector<double> w;
  std::vector<int> cat;
};

Sample sample(std::size_t n, int cats) {
  std::mt19937_64 rng(n);
  Sample s;
  s.w.reserve(n);
  s.cat.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.w.push_back(0.5 + static_cast<double>(rng() >> 11) * 0x1.0p-53);
    s.cat.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(cats)));
  }
  return s;
}

RespondentFrame frame(std::size_t n, std::vector<MarginTarget>& targets) {
  std::mt19937_64 rng(7);
  RespondentFrame f;
  const std::array<int, 4> sizes = {2, 4, 5, 4};
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::string, std::string> cats;
    for (std::size_t v = 0; v < sizes.size(); ++v) {
      cats[fmt::format("v{}", v)] = fmt::format("c{}", rng() % static_cast<std::uint64_t>(sizes[v]));
    }
    f.add(fmt::format("r{}", i), cats);
  }
  targets.clear();
  for (std::size_t v = 0; v < sizes.size(); ++v) {
    MarginTarget t{fmt::format("v{}", v), {}};
    double left = 1.0;
    for (int c = 0; c < sizes[v]; ++c) {
      double share = c + 1 == sizes[v] ? left : (1.0 + 0.1 * c) / (sizes[v] + 0.1 * sizes[v] * (sizes[v] - 1) / 2.0);
      left -= share;
      t.categories.emplace_back(fmt::format("c{}", c), share);
    }
    targets.push_back(std::move(t));
  }
  return f;
}

void CategoryMass(benchmark::State& state, Execution e) {
  auto s = sample(static_cast<std::size_t>(state.range(0)), 5);
  std::vector<double> mass(5);
  for (auto _ : state) {
    std::fill(mass.begin(), mass.end(), 0.0);
    kernels::category_mass(e, s.w, s.cat, mass);
    benchmark::DoNotOptimize(mass.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void ScaleByCategory(benchmark::State& state, Execution e) {
  auto s = sample(static_cast<std::size_t>(state.range(0)), 5);
  std::vector<double> factor = {1.0000001, 0.9999999, 1.0, 1.0000002, 0.9999998};
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::scale_by_category(e, s.w, s.cat, factor));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void Rake(benchmark::State& state, Execution e) {
  std::vector<MarginTarget> targets;
  auto f = frame(static_cast<std::size_t>(state.range(0)), targets);
  RakeOptions opts;
  opts.execution = e;
  opts.tol = 1e-9;
  opts.max_iter = 200;
  for (auto _ : state) benchmark::DoNotOptimize(rake(f, targets, opts).weights.data());
}

void Aggregate(benchmark::State& state, Execution e) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto s = sample(n, 5);
  WeightVector w;
  SurveyQuestion q;
  q.question_id = "q";
  for (int c = 1; c <= 5; ++c) q.options.push_back({c, fmt::format("o{}", c)});
  std::vector<ResponseRecord> rs;
  for (std::size_t i = 0; i < n; ++i) {
    w.ids.push_back(fmt::format("r{}", i));
    w.weights.push_back(s.w[i]);
    rs.push_back({w.ids.back(), "q", s.cat[i] + 1});
  }
  for (auto _ : state) benchmark::DoNotOptimize(weighted_distribution(rs, w, q, e));
}

}  // namespace

BENCHMARK_CAPTURE(CategoryMass, serial, Execution::serial)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK_CAPTURE(CategoryMass, parallel, Execution::parallel)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK_CAPTURE(ScaleByCategory, serial, Execution::serial)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK_CAPTURE(ScaleByCategory, parallel, Execution::parallel)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK_CAPTURE(Rake, serial, Execution::serial)->Arg(1500)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(Rake, parallel, Execution::parallel)->Arg(1500)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(Aggregate, serial, Execution::serial)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(Aggregate, parallel, Execution::parallel)->Arg(100000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
