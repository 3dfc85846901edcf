#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atb/arch.hpp"
#include "atb/tape.hpp"
#include "atb/tensor.hpp"

namespace atb {

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kInitStd = 0.02;

// Transformer encoder with every dimension taken from an ArchConfig. All
// layers share the same structure. The MLM head is the transposed token
// embedding (tied weights).
struct Model {
  ArchConfig arch;
  std::size_t vocab = 0;
  std::size_t max_seq = 0;
  ParamMap params;
};

// (name, shape) for every tensor of a model with this configuration, in the
// deterministic order the ParamMap will iterate them.
std::vector<std::pair<std::string, std::vector<std::size_t>>> model_param_shapes(
    const ArchConfig& arch, std::size_t vocab, std::size_t max_seq);

// Truncated-normal(std 0.02) weights, zero biases, unit layer-norm gains.
// Every tensor draws from its own name-derived stream of `seed`.
Model init_model(const ArchConfig& arch, std::size_t vocab, std::size_t max_seq,
                 std::uint64_t seed);

ParamMap init_param_values(
    const std::vector<std::pair<std::string, std::vector<std::size_t>>>& shapes,
    std::uint64_t seed);

// --- taped forward -----------------------------------------------------

struct TapedEncoderOut {
  Value hidden;                          // [l x d_m]
  std::vector<std::vector<Value>> attn;  // [layer][head], each [l x l]
  Value logits;                          // [l x vocab] when requested
  bool has_logits = false;
};

// Registers every tensor of `params` on the tape (so gradients cover the full
// model) and builds the layer stack. Throws IndexError for ids >= vocab and
// ContractError for sequences longer than max_seq.
TapedEncoderOut encoder_forward_taped(Tape& tape, const ParamMap& params,
                                      const ArchConfig& arch, std::size_t vocab,
                                      std::size_t max_seq, std::span<const int> ids,
                                      bool want_logits);

// Single MHA sub-layer with residual + layer norm (prefix names one layer's
// tensors inside `params`, e.g. "layer0.").
Value mha_block(Tape& tape, Value h_in, const ParamMap& params, const std::string& prefix,
                int heads, std::vector<Value>* attn_out);
// FFN sub-layer with residual + layer norm.
Value ffn_block(Tape& tape, Value h_in, const ParamMap& params, const std::string& prefix);

// --- value-level wrappers ------------------------------------------------

struct EncoderOut {
  Tensor hidden;
  std::vector<std::vector<Tensor>> attn;
  Tensor logits;
};

EncoderOut encoder_forward(const Model& model, std::span<const int> ids,
                           bool want_logits = true);
EncoderOut encoder_forward(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                           std::size_t max_seq, std::span<const int> ids,
                           bool want_logits = true);

// Unprefixed layer weights ("wq", "bq", ..., "ln2.b"); returns the post-norm
// output and the per-head attention maps.
std::pair<Tensor, std::vector<Tensor>> mha_forward(const Tensor& h_in, const ParamMap& weights,
                                                   int heads);
Tensor ffn_forward(const Tensor& h_mha, const ParamMap& weights);

}  // namespace atb
