// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of analytic gradients.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bilcnet/tensor.hpp"

namespace bilcnet {

/// An op under test. `forward` reads the tensors in `vars`; `backward`
/// returns d(sum gy * y)/d(var) for every var, in order.
template <typename T>
struct GradProbe {
  std::vector<std::pair<std::string, Tensor<T>*>> vars;
  std::function<Tensor<T>()> forward;
  std::function<std::vector<Tensor<T>>(const Tensor<T>& gy)> backward;
  // Vars whose gradient is identically zero (e.g. a bias feeding a
  // shift-invariant softmax). Name suffixes; checked against the largest
  // gradient of the other vars instead of their own magnitude.
  std::vector<std::string> zero_grad_suffixes;
};

struct GradCheckResult {
  double max_rel_err = 0;
  std::string worst_var;
};

/// Compares analytic and central-difference gradients of sum(r * y) with a
/// random projection r. Per var the error is max|a - n| / max(max|a|, max|n|, 1e-8),
/// with the f32 floor described at kF32ScaleFloor. Derivatives use a
/// seven-point central stencil.
/// `flip_sign` negates the analytic gradient of the first var.
template <typename T>
GradCheckResult grad_check(GradProbe<T>& probe, std::uint64_t seed, bool flip_sign = false,
                           std::size_t max_coords_per_var = 48);

inline constexpr double kStepF32 = 1e-2;
inline constexpr double kStepF64 = 1e-4;
/// f32 denominators are floored at this fraction of the op's largest gradient.
inline constexpr double kF32ScaleFloor = 1e-2;

struct GradCheckReport {
  std::string name;
  std::string precision;  // "f32" or "f64"
  double max_rel_err = 0;
  double tol = 0;
  bool pass = false;
  std::string worst_var;
};

/// Names of every case in the suite.
const std::vector<std::string>& grad_check_cases();

/// Runs one named case. Throws InvalidConfig for an unknown name.
GradCheckReport run_grad_check_case(const std::string& name, bool f64, std::uint64_t seed, double tol,
                                    bool flip_sign = false);

/// False for the multi-step recurrent and end-to-end cases, whose f32
/// differences are dominated by accumulated rounding; they run in f64 only.
bool grad_check_has_f32(const std::string& name);

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  double tol_f64 = 1e-5;
  double tol_f32 = 1e-3;
  bool include_f32 = true;
  bool flip_sign = false;
};

/// Every case for seeds seed .. seed + seeds - 1; one report per
/// (case, precision) holding the worst error over the seeds.
std::vector<GradCheckReport> run_grad_check_suite(const GradCheckOptions& options);

}  // namespace bilcnet
