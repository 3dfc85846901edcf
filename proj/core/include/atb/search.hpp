#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "atb/arch.hpp"
#include "atb/rng.hpp"

namespace atb {

// PRETRAIN ties d_qkv to the head count at a fixed per-head width (64 at
// paper scale); KD fixes the head count and searches d_qkv directly.
enum class SpaceMode { PRETRAIN, KD };

const char* space_mode_name(SpaceMode m);
SpaceMode space_mode_from_name(const std::string& name);

struct SearchSpace {
  SpaceMode mode = SpaceMode::PRETRAIN;
  std::vector<int> layers;
  std::vector<int> d_model;  // also the d_o domain
  std::vector<int> d_ffn;
  std::vector<int> heads;    // PRETRAIN: searched; KD: a single fixed value
  std::vector<int> d_qkv;    // KD only
  int head_dim = 64;         // PRETRAIN tying width: d_qkv = head_dim * h

  // Domains sorted ascending and nonempty, mode-specific rules hold.
  void check() const;  // throws ConfigError naming the offending domain

  ArchConfig make_arch(int l, int dm, int df, int h_or_dqkv) const;
  ArchConfig max_arch() const;    // elementwise maxima (upper-bound shape)
  bool contains(const ArchConfig& a) const;
};

// Paper-scale domains (Appendix-table values): d_m in 128..768 step 4,
// d_f in 128..3072 step 4; PRETRAIN h in 1..12 with d_qkv = 64h, KD h = 12
// with d_qkv in 180..768 step 12.
SearchSpace paper_pretrain_space();
SearchSpace paper_kd_space();

std::uint64_t space_cardinality(const SearchSpace& space);

// Materializes every point; guarded against spaces above `limit` points.
std::vector<ArchConfig> enumerate_space(const SearchSpace& space, std::uint64_t limit = 1000000);

ArchConfig sample_arch(const SearchSpace& space, Rng& rng);

// Independently resamples each searchable field with probability field_rate.
ArchConfig mutate(const ArchConfig& arch, const SearchSpace& space, double field_rate, Rng& rng);

// Single-point crossover over the searchable field vector (l_t, d_m, d_f,
// h | d_qkv); used only by the crossover-enabled evolution variant.
ArchConfig crossover(const ArchConfig& a, const ArchConfig& b, const SearchSpace& space, Rng& rng);

// Fitness-proportional selection with a min-shift:
// weight_i = score_i - min + 1e-6 * (max - min + 1e-12). Returns the index.
std::size_t roulette_select_index(std::span<const double> scores, Rng& rng);
ArchConfig roulette_select(std::span<const ArchConfig> population,
                           std::span<const double> scores, Rng& rng);

struct EvoParams {
  std::size_t generations = 4;  // T
  std::size_t population = 25;  // S
  double p_m = 0.5;             // mutate parent
  double p_e = 0.5;             // replace with a fresh sample
  double p_c = 0.0;             // crossover (only when crossover_enabled)
  bool crossover_enabled = false;
  double field_mutation_rate = 0.3;
  std::size_t top_k = 3;
  std::uint64_t seed = 0;
};

struct Candidate {
  ArchConfig arch;
  double predicted_latency = 0.0;
  double score = 0.0;
  std::size_t generation = 0;
};

struct EvoResult {
  std::vector<Candidate> winners;  // top_k over all evaluated candidates
  std::vector<Candidate> history;  // every evaluated candidate, in order
};

using ArchScorer = std::function<double(const ArchConfig&)>;

// Generation 1 is rejection-sampled under the latency budget; later
// generations roulette-select a parent and then mutate / explore / keep.
// Offspring over budget are redrawn before evaluation, so history holds
// exactly generations * population entries. 1000 consecutive rejections
// raise InfeasibleError carrying the tightest budget any candidate satisfied.
EvoResult evolve(const SearchSpace& space, const ArchScorer& evaluator,
                 const ArchScorer& predict_latency, double latency_budget,
                 const EvoParams& params);

struct FastRuleCheck {
  bool inside = false;
  double df_ratio = 0.0;    // d_f / d_m
  double dqkv_ratio = 0.0;  // d_qkv / d_m
};

// Membership in 1.6*d_m <= d_f <= 1.9*d_m and 0.7*d_m <= d_qkv <= 1.0*d_m,
// evaluated in exact integer arithmetic, bounds inclusive.
FastRuleCheck fast_rule_check(const ArchConfig& arch);

// For each layer count: the largest-d_m arch whose d_f sits nearest
// 1.75*d_m on the grid and d_qkv nearest 0.85*d_m (under the mode's tying),
// both inside the rule's ratio bounds, with predicted latency within budget.
// Layer counts with no feasible arch are omitted.
std::vector<ArchConfig> fast_rule_candidates(const SearchSpace& space,
                                             const ArchScorer& predict_latency,
                                             double latency_budget);

}  // namespace atb
