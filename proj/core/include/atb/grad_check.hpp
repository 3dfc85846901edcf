#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "atb/tensor.hpp"

namespace atb {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Central-difference gradient oracle: (f(p+eps*e) - f(p-eps*e)) / (2*eps) per
// coordinate, compared against the supplied analytic gradients with relative
// error |a-n| / max(|a|, |n|, 1e-8).
//
// f must be deterministic (verified by a repeated evaluation) and eps must lie
// in [1e-4, 1e-2]. max_coords_per_tensor = 0 checks every coordinate;
// otherwise that many coordinates are sampled per tensor from coord_seed.
GradCheckResult finite_diff_check(const std::function<double(const ParamMap&)>& f,
                                  const ParamMap& params, double epsilon,
                                  const ParamMap& analytic,
                                  std::size_t max_coords_per_tensor = 0,
                                  std::uint64_t coord_seed = 0);

}  // namespace atb
