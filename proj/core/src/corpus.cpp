#include "atb/corpus.hpp"

#include <fstream>
#include <sstream>

#include "atb/error.hpp"
#include "atb/ops.hpp"
#include "atb/rng.hpp"

namespace atb {

std::uint64_t Corpus::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a64(&vocab, sizeof(vocab), h);
  h = fnv1a64(&seq_len, sizeof(seq_len), h);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    h = fnv1a64(seqs[i].data(), seqs[i].size() * sizeof(int), h);
    if (i < labels.size()) h = fnv1a64(&labels[i], sizeof(int), h);
  }
  return h;
}

bool Corpus::has_labels() const {
  for (int l : labels) {
    if (l < 0) return false;
  }
  return !labels.empty();
}

Corpus Corpus::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > seqs.size()) {
    throw ContractError("Corpus::slice: range out of bounds");
  }
  Corpus c;
  c.vocab = vocab;
  c.mask_id = mask_id;
  c.seq_len = seq_len;
  c.seqs.assign(seqs.begin() + begin, seqs.begin() + end);
  c.labels.assign(labels.begin() + begin, labels.begin() + end);
  return c;
}

namespace {

// Deterministic order-2 transition structure with enough regularity for a
// small model to learn: tokens fall into residue clusters, the cluster of the
// next token follows a regime-specific table over the previous two clusters
// (three preferred continuations plus a uniform floor), and the member within
// the cluster is uniform. The cluster tables of the two regimes differ, which
// is what the probe task classifies.
struct MarkovChain {
  std::uint64_t structure;
  std::size_t content_vocab;
  std::size_t n_clusters;

  std::size_t cluster_of(int token) const { return static_cast<std::size_t>(token) % n_clusters; }

  std::size_t members(std::size_t cluster) const {
    return (content_vocab - cluster + n_clusters - 1) / n_clusters;
  }

  // The first preference lands in the regime's half of the cluster alphabet,
  // giving each regime a marginal signature the probe can pick up; the lower
  // preferences roam freely and carry the context-dependent structure.
  std::size_t preferred_cluster(int regime, std::size_t ca, std::size_t cb, int k) const {
    std::uint64_t h = structure;
    const std::uint64_t key[4] = {static_cast<std::uint64_t>(regime), ca, cb,
                                  static_cast<std::uint64_t>(k)};
    h = fnv1a64(key, sizeof(key), h);
    if (k == 0) {
      const std::size_t half = n_clusters / 2;
      return h % half + (regime == 1 ? half : 0);
    }
    return h % n_clusters;
  }

  int next(int regime, int a, int b, Rng& rng) const {
    const std::size_t ca = cluster_of(a), cb = cluster_of(b);
    std::size_t cluster;
    if (rng.uniform() < 0.9) {
      const double v = rng.uniform();
      const int k = v < 0.55 ? 0 : (v < 0.85 ? 1 : 2);
      cluster = preferred_cluster(regime, ca, cb, k);
    } else {
      cluster = rng.uniform_int(n_clusters);
    }
    const std::size_t member = rng.uniform_int(members(cluster));
    return static_cast<int>(member * n_clusters + cluster);
  }
};

}  // namespace

Corpus make_synthetic_corpus(std::size_t vocab, std::size_t seq_len,
                             std::size_t num_sequences, std::uint64_t seed) {
  if (vocab < 8) throw ContractError("make_synthetic_corpus: vocab must be >= 8");
  if (seq_len < 3) throw ContractError("make_synthetic_corpus: seq_len must be >= 3");
  if (num_sequences == 0) throw ContractError("make_synthetic_corpus: no sequences requested");

  Corpus c;
  c.vocab = vocab;
  c.mask_id = static_cast<int>(vocab) - 1;
  c.seq_len = seq_len;

  MarkovChain chain{Rng(seed).split("structure").next_u64(), vocab - 1,
                    vocab - 1 >= 16 ? 8u : 4u};
  Rng root = Rng(seed).split("sequences");
  c.seqs.reserve(num_sequences);
  c.labels.reserve(num_sequences);
  for (std::size_t i = 0; i < num_sequences; ++i) {
    Rng rng = root.split(i);
    const int regime = static_cast<int>(i % 2);  // alternate for balanced classes
    std::vector<int> seq(seq_len);
    seq[0] = static_cast<int>(rng.uniform_int(vocab - 1));
    seq[1] = static_cast<int>(rng.uniform_int(vocab - 1));
    for (std::size_t t = 2; t < seq_len; ++t) {
      seq[t] = chain.next(regime, seq[t - 2], seq[t - 1], rng);
    }
    c.seqs.push_back(std::move(seq));
    c.labels.push_back(regime);
  }
  return c;
}

Corpus load_text_corpus(const std::string& path, std::size_t vocab, std::size_t seq_len) {
  if (vocab < 8) throw ContractError("load_text_corpus: vocab must be >= 8");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);

  Corpus c;
  c.vocab = vocab;
  c.mask_id = static_cast<int>(vocab) - 1;
  c.seq_len = seq_len;

  std::string line;
  std::vector<int> pending;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    while (ls >> word) {
      pending.push_back(static_cast<int>(fnv1a64(word) % (vocab - 1)));
      if (pending.size() == seq_len) {
        c.seqs.push_back(pending);
        c.labels.push_back(-1);
        pending.clear();
      }
    }
    pending.clear();  // sequences never straddle documents
  }
  if (c.seqs.empty()) {
    throw IoError("corpus file " + path + " yields no full sequence of length " +
                  std::to_string(seq_len));
  }
  return c;
}

std::size_t Batch::masked_positions() const {
  std::size_t n = 0;
  for (const auto& row : targets) {
    for (std::int64_t t : row) {
      if (t != ops::kIgnoreTarget) ++n;
    }
  }
  return n;
}

Batch mask_batch(const Corpus& corpus, std::span<const std::size_t> indices, double mask_prob,
                 std::uint64_t seed) {
  if (!(mask_prob > 0.0) || !(mask_prob < 1.0)) {
    throw ContractError("mask_batch: mask_prob must lie in (0, 1)");
  }
  Rng rng(seed);
  Batch b;
  b.input_ids.reserve(indices.size());
  b.targets.reserve(indices.size());
  b.original_ids.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= corpus.seqs.size()) {
      throw IndexError("mask_batch: sequence index out of range");
    }
    const std::vector<int>& orig = corpus.seqs[idx];
    std::vector<int> input = orig;
    std::vector<std::int64_t> target(orig.size(), ops::kIgnoreTarget);
    for (std::size_t t = 0; t < orig.size(); ++t) {
      if (rng.uniform() >= mask_prob) continue;
      target[t] = orig[t];
      const double r = rng.uniform();
      if (r < 0.8) {
        input[t] = corpus.mask_id;
      } else if (r < 0.9) {
        input[t] = static_cast<int>(rng.uniform_int(corpus.vocab - 1));
      }
      // else: keep the original token
    }
    b.input_ids.push_back(std::move(input));
    b.targets.push_back(std::move(target));
    b.original_ids.push_back(orig);
  }
  return b;
}

}  // namespace atb
