#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atb/arch.hpp"
#include "atb/latency.hpp"
#include "atb/search.hpp"
#include "atb/supernet.hpp"
#include "atb/train.hpp"

namespace atb {

struct CorpusSection {
  std::string kind = "synthetic";  // "synthetic" | "text"
  std::string path;
  std::size_t vocab = 64;
  std::size_t seq_len = 32;
  std::size_t num_sequences = 4096;
  std::size_t eval_sequences = 256;   // held-out slice used for scoring
  std::size_t probe_sequences = 256;  // labeled slice used by the probe task
  std::uint64_t seed = 1;
};

struct SupernetSection {
  ArchConfig arch;  // {layers, d_m, d_qkv, d_f, heads}; d_k=d_q, d_o=d_m
  std::size_t max_seq = 32;
  std::uint64_t seed = 5;
};

struct TeacherSection {
  bool present = false;
  ArchConfig arch;
  TrainConfig train;  // budget for the deterministic teacher build
};

struct SearchSection {
  SearchSpace space;
  EvoParams evo;
  double latency_budget_ms = 1.0;
};

struct LatencySection {
  std::size_t num_samples = 2000;
  std::size_t seq_len = 32;
  std::size_t runs = 5;
  LatencyMode mode = LatencyMode::ANALYTIC;
  std::uint64_t seed = 11;
  FitOptions fit;
};

struct BenchmarkSection {
  std::vector<ArchConfig> archs;
  TrainConfig standalone;  // stand-alone training budget
};

struct RunConfig {
  int schema_version = 1;
  CorpusSection corpus;
  SupernetSection supernet;
  TrainConfig train;
  TeacherSection teacher;
  SearchSection search;
  LatencySection latency;
  BenchmarkSection benchmark;
  std::string normalized_json;  // deterministic snapshot for embedding
};

// Parses and fully validates; throws ConfigError with a field-level message
// (missing file included -- a usage error, not an I/O one).
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

SuperConfig super_config_of(const RunConfig& cfg);

// Corpus split helpers: [0, N-eval-probe) trains, the next eval_sequences
// score, the final probe_sequences feed the probe task.
Corpus build_corpus(const CorpusSection& section);
struct CorpusSplits {
  Corpus train;
  Corpus eval;
  Corpus probe;
};
CorpusSplits split_corpus(const Corpus& full, const CorpusSection& section);

}  // namespace atb
