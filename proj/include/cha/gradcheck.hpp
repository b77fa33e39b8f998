#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cha/tensor.hpp"

namespace cha {

// Largest relative deviation between the taped gradient of `loss` and a
// central finite difference, over every element of every input. Per input,
// the error is max|analytic - numeric| / max(max|analytic|, max|numeric|).
double gradient_error(const std::function<Tensor()>& loss, std::span<Tensor> inputs, double eps = 1e-5);

struct GradCheckOptions {
  std::size_t trials = 100;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  bool include_decoder = true;
  // Adds an op with a deliberately wrong backward rule.
  bool inject_fault = false;
};

struct GradCheckResult {
  std::string name;
  std::size_t trials = 0;
  double max_error = 0.0;
  bool passed = false;
};

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options);
std::string format_gradcheck(const std::vector<GradCheckResult>& results);

// Square whose recorded backward rule is off by a factor of 1.5.
Tensor faulty_square(const Tensor& x);

}  // namespace cha
