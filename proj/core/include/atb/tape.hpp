#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "atb/tensor.hpp"

namespace atb {

// Handle into a Tape's node list.
struct Value {
  std::uint32_t id = 0;
};

// Record of a forward pass. Every op appends one node; backward() replays the
// nodes in exact reverse creation order. A tape is single-threaded by
// contract; independent tapes may run concurrently.
class Tape {
 public:
  Value constant(Tensor v);

  // Registers (or re-uses) a named parameter leaf. Calling again with the
  // same name returns the existing node so gradients accumulate in one place.
  Value param(const std::string& name, const Tensor& v);

  Value matmul(Value a, Value b);
  Value matmul_nt(Value a, Value b);
  Value add(Value a, Value b);
  Value add_rowvec(Value a, Value bias);
  Value mul_scalar(Value a, double c);
  Value relu(Value a);
  Value softmax_rows(Value a);
  Value layer_norm(Value x, Value gamma, Value beta, double eps);
  Value slice_rows(Value a, std::size_t r0, std::size_t r1);
  Value slice_cols(Value a, std::size_t c0, std::size_t c1);
  Value gather_rows(Value a, std::vector<std::size_t> ids);
  Value cross_entropy_sum(Value logits, std::vector<std::int64_t> targets,
                          std::size_t* count_out = nullptr);
  Value mse(Value a, Value b);

  const Tensor& value(Value v) const { return nodes_[v.id].value; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Gradients of seed_grad * loss w.r.t. every registered parameter.
  // Parameters the loss never touched come back as exact zeros.
  ParamMap backward(Value loss, double seed_grad = 1.0) const;

 private:
  struct Node {
    Tensor value;
    // Accumulates grad contributions into parent slots.
    std::function<void(const Tape&, const Tensor& grad_out, std::vector<Tensor>& grads)> pull;
  };

  std::uint32_t push(Tensor v,
                     std::function<void(const Tape&, const Tensor&, std::vector<Tensor>&)> pull);
  static void accumulate(std::vector<Tensor>& grads, std::uint32_t id,
                         const std::vector<std::size_t>& shape);

  std::vector<Node> nodes_;
  std::map<std::string, std::uint32_t> params_;
};

}  // namespace atb
