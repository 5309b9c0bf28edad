#include "spirit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>

namespace spirit::kernels {

namespace {

int thread_count(int threads) { return threads > 0 ? threads : omp_get_max_threads(); }

std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

}  // namespace

void category_mass_serial(std::span<const double> w, std::span<const int> cat, std::span<double> mass) {
  std::fill(mass.begin(), mass.end(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) mass[static_cast<std::size_t>(cat[i])] += w[i];
}

void category_mass_parallel(std::span<const double> w, std::span<const int> cat, std::span<double> mass,
                            int threads) {
  const std::size_t k = mass.size();
  const std::size_t blocks = block_count(w.size());
  std::vector<double> partial(blocks * k, 0.0);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);

#pragma omp parallel for schedule(static) num_threads(thread_count(threads))
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(w.size(), lo + kBlock);
    double* out = partial.data() + static_cast<std::size_t>(b) * k;
    for (std::size_t i = lo; i < hi; ++i) out[cat[i]] += w[i];
  }

  std::fill(mass.begin(), mass.end(), 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t c = 0; c < k; ++c) mass[c] += partial[b * k + c];
  }
}

double scale_by_category_serial(std::span<double> w, std::span<const int> cat, std::span<const double> factor) {
  double max_delta = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double old = w[i];
    w[i] = old * factor[static_cast<std::size_t>(cat[i])];
    max_delta = std::max(max_delta, std::abs(w[i] - old));
  }
  return max_delta;
}

double scale_by_category_parallel(std::span<double> w, std::span<const int> cat, std::span<const double> factor,
                                  int threads) {
  const auto n = static_cast<std::ptrdiff_t>(w.size());
  double max_delta = 0.0;

#pragma omp parallel for schedule(static) reduction(max : max_delta) num_threads(thread_count(threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double old = w[i];
    w[i] = old * factor[static_cast<std::size_t>(cat[i])];
    max_delta = std::max(max_delta, std::abs(w[i] - old));
  }
  return max_delta;
}

double sum_serial(std::span<const double> w) {
  double s = 0.0;
  for (double x : w) s += x;
  return s;
}

double sum_parallel(std::span<const double> w, int threads) {
  const std::size_t blocks = block_count(w.size());
  std::vector<double> partial(blocks, 0.0);
  const auto nb = static_cast<std::ptrdiff_t>(blocks);

#pragma omp parallel for schedule(static) num_threads(thread_count(threads))
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(w.size(), lo + kBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += w[i];
    partial[static_cast<std::size_t>(b)] = s;
  }

  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

}  // namespace spirit::kernels
