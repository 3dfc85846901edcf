#pragma once

#include <cstdint>

#include "atb/tensor.hpp"

namespace atb {

enum class OptimizerKind { SGD, ADAM };

struct OptimizerHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // plain L2 added to the gradient; off by default
};

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::ADAM;
  std::uint64_t step = 0;  // number of updates applied so far
  ParamMap m;              // first moments (Adam only)
  ParamMap v;              // second moments (Adam only)
};

// SGD: p -= lr * g. Adam: standard bias-corrected update with eps outside the
// square root. Moment buffers are allocated lazily on first use.
void optimizer_step(ParamMap& params, const ParamMap& grads, OptimizerState& state,
                    const OptimizerHyper& hyper);

}  // namespace atb
