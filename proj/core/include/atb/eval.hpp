#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "atb/corpus.hpp"
#include "atb/supernet.hpp"
#include "atb/train.hpp"

namespace atb {

// LITERAL: sum over all ordered pairs (self-pairs included) of
// 1[f1 >= f2] * 1[s1 >= s2], divided by n^2. With identical strict rankings
// this tops out at (n+1)/(2n), not 1. CONCORDANT divides the same numerator
// by the number of s-ordered pairs instead, so agreement scores 1.0.
enum class PairwiseMode { LITERAL, CONCORDANT };

double pairwise_accuracy(std::span<const double> f_scores, std::span<const double> s_scores,
                         PairwiseMode mode);

struct ProxyScore {
  double mlm_loss = 0.0;        // held-out masked-LM loss
  double probe_accuracy = 0.0;  // regime-probe accuracy on held-out sequences
  double combined = 0.0;        // mean(-mlm_loss / ln(vocab), probe_accuracy)
};

inline constexpr std::uint64_t kEvalMaskSeed = 0xe7a1d05eu;

// Pure scoring of a parameter set: deterministic masked eval loss plus a
// frozen-encoder linear probe of the corpus regime label (closed-form ridge
// least squares on mean-pooled final hidden states, fit on the first 3/4 of
// the probe set, scored on the rest).
ProxyScore score_params(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                        std::size_t max_seq, const Corpus& eval_corpus,
                        const Corpus& probe_set, double mask_prob = 0.15);

// Extracts the sub-model and scores it; never mutates the supernet.
ProxyScore proxy_score(const SuperNet& net, const ArchConfig& arch, ExtractStrategy strategy,
                       const Corpus& eval_corpus, const Corpus& probe_set,
                       double mask_prob = 0.15);

struct RankingEntry {
  ArchConfig arch;
  ProxyScore oneshot;
  ProxyScore standalone;
};

struct RankingReport {
  std::vector<RankingEntry> entries;
  double literal_accuracy = 0.0;      // one-shot vs stand-alone
  double concordant_accuracy = 0.0;
  double literal_self = 0.0;          // stand-alone vs itself
  double concordant_self = 0.0;
  std::uint64_t corpus_hash = 0;
  std::vector<bool> cache_hits;
};

// Trains every architecture stand-alone under the fixed budget (reusing
// hash-keyed cached checkpoints when cache_dir is set), scores both the
// one-shot extractions and the stand-alone models with the same scorer, and
// reports both pairwise-accuracy readings. Stand-alone models are scored
// from their serialized form so reruns reproduce identical numbers.
RankingReport ranking_benchmark(const SuperNet& net, std::span<const ArchConfig> archs,
                                ExtractStrategy strategy, const Corpus& train_corpus,
                                const Corpus& eval_corpus, const Corpus& probe_set,
                                const TrainConfig& standalone_budget,
                                const Model* teacher = nullptr,
                                const std::string& cache_dir = "");

}  // namespace atb
