#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "spirit/kernels.hpp"

using namespace spirit::kernels;

namespace {

struct Data {
  std::vector<double> w;
  std::vector<int> cat;
};

Data make(std::size_t n, int cats, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    d.w.push_back(0.1 + static_cast<double>(rng() >> 11) * 0x1.0p-53 * 5.0);
    d.cat.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(cats)));
  }
  return d;
}

}  // namespace

TEST(Kernels, CategoryMassMatchesNaiveSum) {
  auto d = make(1000, 4, 1);
  std::vector<double> mass(4, 0.0);
  category_mass_serial(d.w, d.cat, mass);
  for (int c = 0; c < 4; ++c) {
    double naive = 0.0;
    for (std::size_t i = 0; i < d.w.size(); ++i) {
      if (d.cat[i] == c) naive += d.w[i];
    }
    EXPECT_EQ(mass[static_cast<std::size_t>(c)], naive);
  }
}

TEST(Kernels, ParallelEqualsSerialWithinOneBlock) {
  for (std::size_t n : {0u, 1u, 17u, 4096u}) {
    auto d = make(n, 3, n + 5);
    std::vector<double> a(3, 0.0), b(3, 0.0);
    category_mass_serial(d.w, d.cat, a);
    category_mass_parallel(d.w, d.cat, b, 4);
    EXPECT_EQ(a, b) << n;
    EXPECT_EQ(sum_serial(d.w), sum_parallel(d.w, 4));
  }
}

TEST(Kernels, ParallelIndependentOfThreadCount) {
  auto d = make(50000, 5, 9);
  std::vector<double> ref(5, 0.0);
  category_mass_parallel(d.w, d.cat, ref, 1);
  const double ref_sum = sum_parallel(d.w, 1);
  for (int threads : {2, 3, 8}) {
    std::vector<double> m(5, 0.0);
    category_mass_parallel(d.w, d.cat, m, threads);
    EXPECT_EQ(m, ref) << threads;
    EXPECT_EQ(sum_parallel(d.w, threads), ref_sum);
  }
  std::vector<double> s(5, 0.0);
  category_mass_serial(d.w, d.cat, s);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(s[c], ref[c], 1e-12 * s[c]);
}

TEST(Kernels, ScaleByCategoryIsElementwiseExact) {
  auto a = make(20000, 3, 4);
  auto b = a;
  std::vector<double> factor = {0.5, 1.25, 3.0};
  double da = scale_by_category_serial(a.w, a.cat, factor);
  double db = scale_by_category_parallel(b.w, b.cat, factor, 3);
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(da, db);
  double expect = 0.0;
  auto orig = make(20000, 3, 4);
  for (std::size_t i = 0; i < orig.w.size(); ++i) {
    expect = std::max(expect, std::abs(orig.w[i] * factor[static_cast<std::size_t>(orig.cat[i])] - orig.w[i]));
  }
  EXPECT_EQ(da, expect);
}

TEST(Kernels, DispatchRoutes) {
  auto d = make(100, 2, 2);
  EXPECT_EQ(sum(Execution::serial, d.w), sum_serial(d.w));
  EXPECT_EQ(sum(Execution::parallel, d.w), sum_parallel(d.w));
}
