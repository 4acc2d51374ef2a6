#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace resfcn {

struct GradSuiteOptions {
  int seeds = 100;
  double eps = 1e-5;
  double tolerance = 1e-5;
  // A case fails if more than this fraction of its coordinates had to be
  // skipped because the perturbation crossed a ReLU kink.
  double max_kink_fraction = 0.02;
};

struct GradCaseResult {
  std::string name;
  double worst_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;
  int seeds = 0;
  bool passed = false;
};

std::vector<std::string> gradient_case_names();

/// Finite-difference checks in 64-bit mode over every operator, every block
/// variant (3 kinds x 3 resample modes x short skip on/off), both losses
/// and a 3-level toy network. `filter`, when set, selects cases by name.
std::vector<GradCaseResult> run_gradient_suite(
    const GradSuiteOptions& opts, const std::function<bool(const std::string&)>& filter = nullptr);

}  // namespace resfcn
