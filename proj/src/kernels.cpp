#include "cha/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace cha::kernels {
namespace {

void check_extents(const GemmShape& s, std::size_t na, std::size_t nb, std::size_t nc) {
  if (na < s.m * s.k || nb < s.k * s.n || nc < s.m * s.n)
    throw std::invalid_argument("gemm: buffer too small for " + std::to_string(s.m) + "x" +
                                std::to_string(s.k) + " * " + std::to_string(s.k) + "x" +
                                std::to_string(s.n));
}

inline double a_at(const GemmShape& s, const double* a, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}

inline double b_at(const GemmShape& s, const double* b, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

// One output row; the reduction over p runs in ascending order for every j.
inline void gemm_row(const GemmShape& s, const double* a, const double* b, double* c,
                     std::size_t i, bool accumulate, double* row) {
  std::fill(row, row + s.n, 0.0);
  for (std::size_t p = 0; p < s.k; ++p) {
    const double aip = a_at(s, a, i, p);
    if (!s.trans_b) {
      const double* brow = b + p * s.n;
      for (std::size_t j = 0; j < s.n; ++j) row[j] += aip * brow[j];
    } else {
      for (std::size_t j = 0; j < s.n; ++j) row[j] += aip * b[j * s.k + p];
    }
  }
  double* crow = c + i * s.n;
  if (accumulate) {
    for (std::size_t j = 0; j < s.n; ++j) crow[j] += row[j];
  } else {
    std::copy(row, row + s.n, crow);
  }
}

int g_thread_cap = 0;

}  // namespace

void gemm_serial(const GemmShape& s, std::span<const double> a, std::span<const double> b,
                 std::span<double> c, bool accumulate) {
  check_extents(s, a.size(), b.size(), c.size());
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) sum += a_at(s, a.data(), i, p) * b_at(s, b.data(), p, j);
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + sum : sum;
    }
  }
}

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  check_extents(s, a.size(), b.size(), c.size());
  const bool parallel = s.m > 1 && s.m * s.n * s.k >= kParallelThreshold && thread_cap() > 1;
  const auto m = static_cast<long long>(s.m);
#pragma omp parallel if (parallel) num_threads(std::max(1, thread_cap()))
  {
    std::vector<double> row(s.n);
#pragma omp for schedule(static)
    for (long long i = 0; i < m; ++i)
      gemm_row(s, a.data(), b.data(), c.data(), static_cast<std::size_t>(i), accumulate, row.data());
  }
}

void set_thread_cap(int threads) { g_thread_cap = std::max(1, threads); }

int thread_cap() { return g_thread_cap > 0 ? std::min(g_thread_cap, omp_get_max_threads()) : omp_get_max_threads(); }

void apply_thread_env() {
  if (const char* env = std::getenv("CHA_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) set_thread_cap(n);
  }
}

}  // namespace cha::kernels
