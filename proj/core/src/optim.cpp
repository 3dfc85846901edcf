#include "atb/optim.hpp"

#include <cmath>

#include "atb/error.hpp"

namespace atb {

void optimizer_step(ParamMap& params, const ParamMap& grads, OptimizerState& state,
                    const OptimizerHyper& hyper) {
  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);

  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) {
      throw DimensionError("optimizer_step: missing gradient for parameter " + name);
    }
    const Tensor& g = git->second;
    if (!g.same_shape(p)) {
      throw DimensionError("optimizer_step: gradient shape " + g.shape_str() +
                           " does not match parameter " + name + " " + p.shape_str());
    }
    if (state.kind == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        double gi = g[i];
        if (hyper.weight_decay != 0.0) gi += hyper.weight_decay * p[i];
        p[i] -= hyper.lr * gi;
      }
      continue;
    }
    auto mit = state.m.find(name);
    if (mit == state.m.end()) mit = state.m.emplace(name, Tensor::zeros(p.shape())).first;
    auto vit = state.v.find(name);
    if (vit == state.v.end()) vit = state.v.emplace(name, Tensor::zeros(p.shape())).first;
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      if (hyper.weight_decay != 0.0) gi += hyper.weight_decay * p[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

}  // namespace atb
