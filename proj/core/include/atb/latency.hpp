#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "atb/arch.hpp"
#include "atb/search.hpp"
#include "atb/tensor.hpp"

namespace atb {

enum class LatencyMode { MEASURED, ANALYTIC };

const char* latency_mode_name(LatencyMode m);
LatencyMode latency_mode_from_name(const std::string& name);

// (l_t, d_m, d_q, d_v, d_f) scaled into [0,1] by the search-space maxima.
// d_k and d_o are excluded: they are tied to d_q and d_m.
std::array<double, 5> normalize_features(const SearchSpace& space, const ArchConfig& arch);

// Inverse of normalize_features; exact on grid points.
ArchConfig features_to_arch(const SearchSpace& space, const std::array<double, 5>& features);

struct LatencySample {
  ArchConfig arch;
  std::array<double, 5> features{};
  double latency_ms = 0.0;
};

struct LatencyDataset {
  std::vector<LatencySample> samples;
  std::array<double, 5> feature_max{};
  LatencyMode mode = LatencyMode::ANALYTIC;
  bool exhausted_space = false;  // space had fewer unique points than requested
};

// Median wall time (ms) of single-sequence forward passes on a seeded
// random-init model; at least two warmup passes are discarded.
double measure_latency(const ArchConfig& arch, std::size_t seq_len, std::size_t runs,
                       std::size_t vocab = 64, std::uint64_t seed = 0);

// flops_forward scaled to pseudo-milliseconds by a fixed constant; the
// deterministic stand-in for wall-clock measurement.
double analytic_latency(const ArchConfig& arch, std::size_t seq_len);
inline constexpr double kAnalyticMsPerMac = 1e-6;

// n unique uniform samples (all points, with a warning flag, when the space
// is smaller), each labeled with measured or analytic latency.
LatencyDataset build_latency_dataset(const SearchSpace& space, std::size_t n,
                                     std::size_t seq_len, LatencyMode mode, std::uint64_t seed,
                                     std::size_t measure_runs = 5, std::size_t vocab = 64);

// 5 -> 64 -> 64 -> 1 rectifier network fit on standardized log-latency.
struct LatencyModel {
  ParamMap net;
  std::array<double, 5> feature_max{};
  double log_mean = 0.0;
  double log_std = 1.0;
  bool constant_output = false;  // degenerate all-equal targets
  double constant_value = 0.0;
  double held_out_mean_rel_err = 0.0;
  double held_out_median_rel_err = 0.0;
  double floor_ms = 1e-6;
};

struct FitOptions {
  std::size_t epochs = 400;
  std::size_t batch_size = 128;
  double lr = 3e-3;
  double holdout_fraction = 0.1;
};

// 90/10 split by split_seed, mean-squared-error training on the transformed
// targets, held-out relative errors reported on the original scale.
LatencyModel fit_predictor(const LatencyDataset& dataset, std::uint64_t split_seed,
                           const FitOptions& options = {});

// Finite, positive (clamped at floor_ms) prediction in pseudo-milliseconds.
double predict(const LatencyModel& model, const ArchConfig& arch);

}  // namespace atb
