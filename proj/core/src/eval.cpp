#include "atb/eval.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "atb/checkpoint.hpp"
#include "atb/error.hpp"
#include "atb/rng.hpp"

namespace atb {

double pairwise_accuracy(std::span<const double> f, std::span<const double> s,
                         PairwiseMode mode) {
  if (f.size() != s.size()) {
    throw ContractError("pairwise_accuracy: score vectors of lengths " +
                        std::to_string(f.size()) + " and " + std::to_string(s.size()));
  }
  const std::size_t n = f.size();
  if (n < 2) throw ContractError("pairwise_accuracy: need at least 2 scores");
  std::uint64_t numerator = 0;
  std::uint64_t s_pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool s_ge = s[i] >= s[j];
      if (s_ge) ++s_pairs;
      if (f[i] >= f[j] && s_ge) ++numerator;
    }
  }
  if (mode == PairwiseMode::LITERAL) {
    return static_cast<double>(numerator) / static_cast<double>(n * n);
  }
  return static_cast<double>(numerator) / static_cast<double>(s_pairs);
}

namespace {

// Ridge least squares via Cholesky; dim is small (d_m + 1).
std::vector<double> solve_ridge(std::vector<std::vector<double>>& a, std::vector<double>& b) {
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i][j];
      for (std::size_t k = 0; k < j; ++k) sum -= a[i][k] * a[j][k];
      if (i == j) {
        if (sum <= 0.0) throw NumericError("probe: normal matrix not positive definite");
        a[i][i] = std::sqrt(sum);
      } else {
        a[i][j] = sum / a[j][j];
      }
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= a[i][k] * y[k];
    y[i] = sum / a[i][i];
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double sum = y[i];
    for (std::size_t k = i + 1; k < n; ++k) sum -= a[k][i] * x[k];
    x[i] = sum / a[i][i];
  }
  return x;
}

std::vector<double> mean_pooled_hidden(const ParamMap& params, const ArchConfig& arch,
                                       std::size_t vocab, std::size_t max_seq,
                                       const std::vector<int>& seq) {
  EncoderOut out = encoder_forward(params, arch, vocab, max_seq, seq, /*want_logits=*/false);
  const std::size_t l = out.hidden.rows(), d = out.hidden.cols();
  std::vector<double> pooled(d, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < d; ++j) pooled[j] += out.hidden(i, j);
  }
  for (double& v : pooled) v /= static_cast<double>(l);
  return pooled;
}

double probe_accuracy(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                      std::size_t max_seq, const Corpus& probe_set) {
  if (!probe_set.has_labels()) {
    throw ContractError("probe: corpus has no regime labels (synthetic corpora only)");
  }
  const std::size_t n = probe_set.seqs.size();
  if (n < 8) throw ContractError("probe: need at least 8 labeled sequences");
  const std::size_t n_fit = (n * 3) / 4;
  const std::size_t dim = static_cast<std::size_t>(arch.d_m) + 1;  // bias column

  std::vector<std::vector<double>> features(n);
  for (std::size_t i = 0; i < n; ++i) {
    features[i] = mean_pooled_hidden(params, arch, vocab, max_seq, probe_set.seqs[i]);
    features[i].push_back(1.0);
  }

  const double lambda = 1e-3;
  std::vector<std::vector<double>> gram(dim, std::vector<double>(dim, 0.0));
  std::vector<double> rhs(dim, 0.0);
  for (std::size_t i = 0; i < n_fit; ++i) {
    const double y = probe_set.labels[i] == 1 ? 1.0 : -1.0;
    for (std::size_t a = 0; a < dim; ++a) {
      rhs[a] += features[i][a] * y;
      for (std::size_t b = 0; b <= a; ++b) gram[a][b] += features[i][a] * features[i][b];
    }
  }
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a + 1; b < dim; ++b) gram[a][b] = gram[b][a];
    gram[a][a] += lambda;
  }
  const std::vector<double> w = solve_ridge(gram, rhs);

  std::size_t correct = 0;
  for (std::size_t i = n_fit; i < n; ++i) {
    double score = 0.0;
    for (std::size_t a = 0; a < dim; ++a) score += features[i][a] * w[a];
    const int pred = score >= 0.0 ? 1 : 0;
    if (pred == probe_set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n - n_fit);
}

}  // namespace

ProxyScore score_params(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                        std::size_t max_seq, const Corpus& eval_corpus,
                        const Corpus& probe_set, double mask_prob) {
  std::vector<std::size_t> all(eval_corpus.seqs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Batch batch = mask_batch(eval_corpus, all, mask_prob, kEvalMaskSeed);

  ProxyScore s;
  s.mlm_loss = mlm_loss(params, arch, vocab, max_seq, batch);
  s.probe_accuracy = probe_accuracy(params, arch, vocab, max_seq, probe_set);
  const double normalized = s.mlm_loss / std::log(static_cast<double>(vocab));
  s.combined = 0.5 * (-normalized + s.probe_accuracy);
  return s;
}

ProxyScore proxy_score(const SuperNet& net, const ArchConfig& arch, ExtractStrategy strategy,
                       const Corpus& eval_corpus, const Corpus& probe_set, double mask_prob) {
  SubModelView view = extract_submodel(net, arch, strategy);
  ParamMap params = gather(net, view);
  return score_params(params, arch, net.config.vocab, net.config.max_seq, eval_corpus,
                      probe_set, mask_prob);
}

namespace {

std::uint64_t standalone_cache_key(const ArchConfig& arch, const Corpus& corpus,
                                   const TrainConfig& budget) {
  std::ostringstream os;
  os << format_compact(arch) << '|' << corpus.content_hash() << '|' << budget.lr << '|'
     << budget.batch_size << '|' << budget.epochs << '|' << budget.max_steps << '|'
     << budget.seed << '|' << objective_name(budget.objective) << '|'
     << (budget.optimizer == OptimizerKind::ADAM ? "adam" : "sgd") << '|' << budget.mask_prob
     << '|' << budget.warmup_ratio;
  const std::string key = os.str();
  return fnv1a64(key);
}

}  // namespace

RankingReport ranking_benchmark(const SuperNet& net, std::span<const ArchConfig> archs,
                                ExtractStrategy strategy, const Corpus& train_corpus,
                                const Corpus& eval_corpus, const Corpus& probe_set,
                                const TrainConfig& standalone_budget, const Model* teacher,
                                const std::string& cache_dir) {
  if (archs.size() < 4) {
    throw ContractError("ranking_benchmark: need at least 4 architectures, got " +
                        std::to_string(archs.size()));
  }
  RankingReport report;
  report.corpus_hash = train_corpus.content_hash();

  for (const ArchConfig& arch : archs) {
    RankingEntry entry;
    entry.arch = arch;
    entry.oneshot = proxy_score(net, arch, strategy, eval_corpus, probe_set);

    ParamMap standalone_params;
    bool cache_hit = false;
    std::string cache_path;
    if (!cache_dir.empty()) {
      std::filesystem::create_directories(cache_dir);
      const std::uint64_t key = standalone_cache_key(arch, train_corpus, standalone_budget);
      cache_path = cache_dir + "/standalone-" + hash_hex(key) + ".atbt";
      if (std::filesystem::exists(cache_path)) {
        standalone_params = load_checkpoint(cache_path).tensors;
        cache_hit = true;
      }
    }
    if (!cache_hit) {
      TrainedModel trained = standalone_train(arch, train_corpus, standalone_budget, teacher);
      if (!cache_path.empty()) {
        CheckpointMeta meta;
        meta.kind = "model";
        meta.config_json = "{\"arch\":" + arch_to_kv(arch) + "}";
        save_checkpoint(cache_path, meta, trained.model.params);
        // Score what was persisted, so cached reruns reproduce identical numbers.
        standalone_params = load_checkpoint(cache_path).tensors;
      } else {
        standalone_params = std::move(trained.model.params);
      }
    }
    entry.standalone = score_params(standalone_params, arch, net.config.vocab,
                                    net.config.max_seq, eval_corpus, probe_set);
    report.entries.push_back(std::move(entry));
    report.cache_hits.push_back(cache_hit);
  }

  std::vector<double> f, s;
  for (const auto& e : report.entries) {
    f.push_back(e.oneshot.combined);
    s.push_back(e.standalone.combined);
  }
  report.literal_accuracy = pairwise_accuracy(f, s, PairwiseMode::LITERAL);
  report.concordant_accuracy = pairwise_accuracy(f, s, PairwiseMode::CONCORDANT);
  report.literal_self = pairwise_accuracy(s, s, PairwiseMode::LITERAL);
  report.concordant_self = pairwise_accuracy(s, s, PairwiseMode::CONCORDANT);
  return report;
}

}  // namespace atb
