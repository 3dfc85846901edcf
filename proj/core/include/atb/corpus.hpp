#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace atb {

// Token-id sequences of fixed length. Synthetic corpora come from a pair of
// seeded order-2 Markov chains (two "regimes"); each sequence carries its
// regime label, which the probe task classifies. The highest id is reserved
// as the mask token.
struct Corpus {
  std::vector<std::vector<int>> seqs;
  std::vector<int> labels;  // regime per sequence; -1 for text corpora
  std::size_t vocab = 0;
  int mask_id = 0;
  std::size_t seq_len = 0;

  std::uint64_t content_hash() const;
  bool has_labels() const;
  Corpus slice(std::size_t begin, std::size_t end) const;
};

Corpus make_synthetic_corpus(std::size_t vocab, std::size_t seq_len,
                             std::size_t num_sequences, std::uint64_t seed);

// UTF-8 plain text, one document per line, whitespace tokenization with ids
// hashed into [0, vocab-1); sequences are consecutive seq_len chunks.
Corpus load_text_corpus(const std::string& path, std::size_t vocab, std::size_t seq_len);

struct Batch {
  std::vector<std::vector<int>> input_ids;
  std::vector<std::vector<std::int64_t>> targets;  // ignore marker where unmasked
  std::vector<std::vector<int>> original_ids;

  std::size_t masked_positions() const;
};

// Each position is selected independently with probability mask_prob; of the
// selected: 80% mask token, 10% random content token, 10% left unchanged.
// Targets are set exactly at selected positions.
Batch mask_batch(const Corpus& corpus, std::span<const std::size_t> indices, double mask_prob,
                 std::uint64_t seed);

}  // namespace atb
