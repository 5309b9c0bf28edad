#pragma once

#include <cstddef>
#include <span>

namespace spirit::kernels {

enum class Execution { serial, parallel };

/// Work is split into fixed blocks whose partial sums are combined in block
/// order, so parallel results do not depend on the thread count.
inline constexpr std::size_t kBlock = 4096;

/// mass[c] = sum of w[i] over i with cat[i] == c. Categories must be in [0, mass.size()).
void category_mass_serial(std::span<const double> w, std::span<const int> cat, std::span<double> mass);
void category_mass_parallel(std::span<const double> w, std::span<const int> cat, std::span<double> mass,
                            int threads = 0);

/// w[i] *= factor[cat[i]]; returns max |new w[i] - old w[i]|.
double scale_by_category_serial(std::span<double> w, std::span<const int> cat, std::span<const double> factor);
double scale_by_category_parallel(std::span<double> w, std::span<const int> cat, std::span<const double> factor,
                                  int threads = 0);

double sum_serial(std::span<const double> w);
double sum_parallel(std::span<const double> w, int threads = 0);

inline void category_mass(Execution e, std::span<const double> w, std::span<const int> cat, std::span<double> mass,
                          int threads = 0) {
  if (e == Execution::serial) {
    category_mass_serial(w, cat, mass);
  } else {
    category_mass_parallel(w, cat, mass, threads);
  }
}

inline double scale_by_category(Execution e, std::span<double> w, std::span<const int> cat,
                                std::span<const double> factor, int threads = 0) {
  return e == Execution::serial ? scale_by_category_serial(w, cat, factor)
                                : scale_by_category_parallel(w, cat, factor, threads);
}

inline double sum(Execution e, std::span<const double> w, int threads = 0) {
  return e == Execution::serial ? sum_serial(w) : sum_parallel(w, threads);
}

}  // namespace spirit::kernels
