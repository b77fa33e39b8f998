#pragma once

#include <cstddef>
#include <span>

// Dense row-major linear-algebra kernels. Every kernel has a serial
// reference and an OpenMP version; the two produce bit-identical results
// because each output element is reduced in the same order.
namespace cha::kernels {

struct GemmShape {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // cols of op(B) and C
  std::size_t k = 0;  // inner extent
  bool trans_a = false;  // A stored k×m
  bool trans_b = false;  // B stored n×k
};

// C = op(A)·op(B), or C += op(A)·op(B) when accumulate is set.
void gemm_serial(const GemmShape& s, std::span<const double> a, std::span<const double> b,
                 std::span<double> c, bool accumulate = false);
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate = false);

// Work (m·n·k) below which gemm stays on the calling thread.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 15;

// Caps the worker threads used by parallel kernels and parallel loops.
void set_thread_cap(int threads);
int thread_cap();

// Reads CHA_THREADS from the environment and applies it, if set.
void apply_thread_env();

}  // namespace cha::kernels
