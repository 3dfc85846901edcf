#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace atb {

// One architecture hyper-parameter assignment. d_q == d_k and d_o == d_m are
// hard constraints (dot-product attention and the residual connection); the
// per-head dimensions d_q/h and d_v/h must be integral.
struct ArchConfig {
  int l_t = 0;  // transformer layer count
  int d_m = 0;  // hidden size
  int d_q = 0;  // total query dim across heads
  int d_k = 0;  // total key dim (== d_q)
  int d_v = 0;  // total value dim
  int d_f = 0;  // FFN intermediate size
  int d_o = 0;  // output projection target (== d_m)
  int h = 0;    // head count

  bool operator==(const ArchConfig&) const = default;
  // lexicographic on (l_t, d_m, d_q, d_k, d_v, d_f, d_o, h)
  bool operator<(const ArchConfig& o) const;
};

// Returns every violated invariant, not just the first. Empty means valid.
std::vector<std::string> validate(const ArchConfig& arch);
bool is_valid(const ArchConfig& arch);
void require_valid(const ArchConfig& arch);  // throws ValidationError listing all violations

// Compact display form "l_t-d_m-d_f-h-d_qkv", e.g. "5-564-1054-8-512".
std::string format_compact(const ArchConfig& arch);
ArchConfig parse_compact(const std::string& s);  // throws ConfigError on malformed input

// Textual key-value object with keys l_t, d_m, d_q, d_k, d_v, d_f, d_o, h.
std::string arch_to_kv(const ArchConfig& arch);
ArchConfig arch_from_kv(const std::string& text);

// True when `arch` can be extracted from a supernet shaped by `outer`:
// elementwise dims <= and layer count <=.
bool fits_within(const ArchConfig& arch, const ArchConfig& outer);

// Exact trainable-parameter count, including the token and learned position
// embeddings, q/k/v/o projections with biases, the FFN with biases, and two
// layer-norm parameter pairs per layer. The output head is tied to the token
// embedding and adds nothing.
std::uint64_t param_count(const ArchConfig& arch, std::uint64_t vocab, std::uint64_t max_seq);

// Multiply-accumulate count of one forward pass over seq_len tokens:
// q/k/v projections, the two attention products, the output projection and
// both FFN products. Softmax, layer norm, bias adds, the embedding lookup and
// the tied logits head are excluded.
std::uint64_t flops_forward(const ArchConfig& arch, std::uint64_t seq_len);

}  // namespace atb
