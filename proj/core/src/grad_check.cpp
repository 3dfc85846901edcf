#include "atb/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "atb/error.hpp"
#include "atb/rng.hpp"

namespace atb {

GradCheckResult finite_diff_check(const std::function<double(const ParamMap&)>& f,
                                  const ParamMap& params, double epsilon,
                                  const ParamMap& analytic,
                                  std::size_t max_coords_per_tensor,
                                  std::uint64_t coord_seed) {
  if (epsilon < 1e-4 || epsilon > 1e-2) {
    throw ContractError("finite_diff_check: epsilon must lie in [1e-4, 1e-2]");
  }
  const double f0 = f(params);
  const double f0_again = f(params);
  if (f0 != f0_again) {
    throw OracleError("finite_diff_check: f is not deterministic (" + std::to_string(f0) +
                      " vs " + std::to_string(f0_again) + ")");
  }

  GradCheckResult result;
  ParamMap work = params;
  Rng rng(coord_seed);

  for (const auto& [name, p] : params) {
    auto ait = analytic.find(name);
    if (ait == analytic.end()) {
      throw ContractError("finite_diff_check: analytic gradients missing parameter " + name);
    }
    if (!ait->second.same_shape(p)) {
      throw DimensionError("finite_diff_check: analytic gradient shape mismatch for " + name);
    }

    std::vector<std::size_t> coords;
    if (max_coords_per_tensor == 0 || max_coords_per_tensor >= p.size()) {
      coords.resize(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < max_coords_per_tensor; ++i) {
        coords.push_back(rng.uniform_int(p.size()));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    Tensor& w = work.at(name);
    for (std::size_t i : coords) {
      const double orig = w[i];
      w[i] = orig + epsilon;
      const double f_plus = f(work);
      w[i] = orig - epsilon;
      const double f_minus = f(work);
      w[i] = orig;

      const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      const double a = ait->second[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace atb
