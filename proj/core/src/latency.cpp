#include "atb/latency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "atb/error.hpp"
#include "atb/model.hpp"
#include "atb/ops.hpp"
#include "atb/optim.hpp"
#include "atb/rng.hpp"
#include "atb/tape.hpp"

namespace atb {

const char* latency_mode_name(LatencyMode m) {
  return m == LatencyMode::MEASURED ? "measured" : "analytic";
}

LatencyMode latency_mode_from_name(const std::string& name) {
  if (name == "measured" || name == "MEASURED") return LatencyMode::MEASURED;
  if (name == "analytic" || name == "ANALYTIC") return LatencyMode::ANALYTIC;
  throw ConfigError("unknown latency mode \"" + name + "\"");
}

namespace {
std::array<double, 5> space_maxima(const SearchSpace& space) {
  const ArchConfig mx = space.max_arch();
  return {static_cast<double>(mx.l_t), static_cast<double>(mx.d_m),
          static_cast<double>(mx.d_q), static_cast<double>(mx.d_v),
          static_cast<double>(mx.d_f)};
}
}  // namespace

std::array<double, 5> normalize_features(const SearchSpace& space, const ArchConfig& arch) {
  const auto mx = space_maxima(space);
  return {arch.l_t / mx[0], arch.d_m / mx[1], arch.d_q / mx[2], arch.d_v / mx[3],
          arch.d_f / mx[4]};
}

ArchConfig features_to_arch(const SearchSpace& space, const std::array<double, 5>& f) {
  const auto mx = space_maxima(space);
  ArchConfig a;
  a.l_t = static_cast<int>(std::lround(f[0] * mx[0]));
  a.d_m = static_cast<int>(std::lround(f[1] * mx[1]));
  a.d_q = static_cast<int>(std::lround(f[2] * mx[2]));
  a.d_v = static_cast<int>(std::lround(f[3] * mx[3]));
  a.d_f = static_cast<int>(std::lround(f[4] * mx[4]));
  a.d_k = a.d_q;
  a.d_o = a.d_m;
  if (space.mode == SpaceMode::PRETRAIN) {
    a.h = a.d_q / space.head_dim;
  } else {
    a.h = space.heads[0];
  }
  return a;
}

double measure_latency(const ArchConfig& arch, std::size_t seq_len, std::size_t runs,
                       std::size_t vocab, std::uint64_t seed) {
  if (runs < 3) {
    throw ContractError("measure_latency: at least 3 timed runs are required");
  }
  require_valid(arch);
  using Clock = std::chrono::steady_clock;

  const std::size_t max_seq = std::max<std::size_t>(seq_len, 1);
  Model model = init_model(arch, vocab, max_seq, Rng(seed).split("measure_init").seed());
  Rng id_rng = Rng(seed).split("measure_ids");
  std::vector<int> ids(seq_len);
  for (auto& id : ids) id = static_cast<int>(id_rng.uniform_int(vocab));

  for (int w = 0; w < 2; ++w) {
    (void)encoder_forward(model, ids, /*want_logits=*/true);
  }

  // Timer granularity estimate: smallest nonzero delta between consecutive reads.
  double resolution_ms = 0.0;
  for (int probe = 0; probe < 8; ++probe) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    const double d = std::chrono::duration<double, std::milli>(b - a).count();
    resolution_ms = resolution_ms == 0.0 ? d : std::min(resolution_ms, d);
  }

  std::vector<double> times;
  times.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    const auto t0 = Clock::now();
    (void)encoder_forward(model, ids, /*want_logits=*/true);
    const auto t1 = Clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const double median = times[times.size() / 2];
  if (median <= resolution_ms * 4.0) {
    throw MeasurementError("measure_latency: timer resolution (" +
                           std::to_string(resolution_ms) + " ms) too coarse for median " +
                           std::to_string(median) + " ms");
  }
  return median;
}

double analytic_latency(const ArchConfig& arch, std::size_t seq_len) {
  return static_cast<double>(flops_forward(arch, seq_len)) * kAnalyticMsPerMac;
}

LatencyDataset build_latency_dataset(const SearchSpace& space, std::size_t n,
                                     std::size_t seq_len, LatencyMode mode, std::uint64_t seed,
                                     std::size_t measure_runs, std::size_t vocab) {
  if (n < 100) throw ContractError("build_latency_dataset: need at least 100 samples to fit");
  space.check();

  LatencyDataset ds;
  ds.mode = mode;
  ds.feature_max = space_maxima(space);

  const std::uint64_t cardinality = space_cardinality(space);
  std::vector<ArchConfig> picked;
  std::set<ArchConfig> seen;
  if (cardinality <= n) {
    picked = enumerate_space(space, std::max<std::uint64_t>(cardinality, 1));
    ds.exhausted_space = true;
  } else {
    Rng rng = Rng(seed).split("latency_dataset");
    while (picked.size() < n) {
      ArchConfig a = sample_arch(space, rng);
      if (seen.insert(a).second) picked.push_back(a);
    }
  }

  ds.samples.reserve(picked.size());
  if (mode == LatencyMode::ANALYTIC) {
    for (const ArchConfig& a : picked) {
      LatencySample s;
      s.arch = a;
      s.features = normalize_features(space, a);
      s.latency_ms = analytic_latency(a, seq_len);
      ds.samples.push_back(s);
    }
    return ds;
  }

  // Measured collection is interleaved: one timed pass per architecture per
  // round, so every median spans the whole collection window. Consecutive
  // per-architecture runs would let a clock-frequency shift mid-collection
  // rescale some architectures wholesale and silently distort the dataset.
  if (measure_runs < 3) {
    throw ContractError("build_latency_dataset: at least 3 timed runs are required");
  }
  using Clock = std::chrono::steady_clock;
  std::vector<Model> models;
  std::vector<std::vector<int>> inputs;
  models.reserve(picked.size());
  inputs.reserve(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const Rng arch_seed = Rng(seed).split("measure").split(i);
    models.push_back(init_model(picked[i], vocab, std::max<std::size_t>(seq_len, 1),
                                arch_seed.split("measure_init").seed()));
    Rng id_rng = arch_seed.split("measure_ids");
    std::vector<int> ids(seq_len);
    for (auto& id : ids) id = static_cast<int>(id_rng.uniform_int(vocab));
    inputs.push_back(std::move(ids));
  }
  double resolution_ms = 0.0;
  for (int probe = 0; probe < 8; ++probe) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    const double d = std::chrono::duration<double, std::milli>(b - a).count();
    resolution_ms = resolution_ms == 0.0 ? d : std::min(resolution_ms, d);
  }
  std::vector<std::vector<double>> times(picked.size());
  for (std::size_t round = 0; round < measure_runs + 2; ++round) {
    for (std::size_t i = 0; i < picked.size(); ++i) {
      const auto t0 = Clock::now();
      (void)encoder_forward(models[i], inputs[i], /*want_logits=*/true);
      const auto t1 = Clock::now();
      if (round < 2) continue;  // warmup rounds are discarded
      times[i].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  for (std::size_t i = 0; i < picked.size(); ++i) {
    std::sort(times[i].begin(), times[i].end());
    const double median = times[i][times[i].size() / 2];
    if (median <= resolution_ms * 4.0) {
      throw MeasurementError("build_latency_dataset: timer resolution (" +
                             std::to_string(resolution_ms) + " ms) too coarse for median " +
                             std::to_string(median) + " ms");
    }
    LatencySample s;
    s.arch = picked[i];
    s.features = normalize_features(space, picked[i]);
    s.latency_ms = median;
    ds.samples.push_back(s);
  }
  return ds;
}

namespace {

Tensor feature_matrix(const std::vector<LatencySample>& samples,
                      const std::vector<std::size_t>& idx) {
  Tensor x({idx.size(), 5});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < 5; ++j) x(i, j) = samples[idx[i]].features[j];
  }
  return x;
}

Tensor mlp_forward_values(const ParamMap& net, const Tensor& x) {
  using namespace ops;
  Tensor h1 = relu(add_rowvec(matmul(x, net.at("fc1")), net.at("fc1.b")));
  Tensor h2 = relu(add_rowvec(matmul(h1, net.at("fc2")), net.at("fc2.b")));
  return add_rowvec(matmul(h2, net.at("fc3")), net.at("fc3.b"));
}

double rel_err(double pred, double target) {
  return std::fabs(pred - target) / std::max(std::fabs(target), 1e-12);
}

}  // namespace

LatencyModel fit_predictor(const LatencyDataset& dataset, std::uint64_t split_seed,
                           const FitOptions& options) {
  const auto& samples = dataset.samples;
  if (samples.size() < 100) {
    throw ContractError("fit_predictor: need at least 100 samples, got " +
                        std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (!(s.latency_ms > 0.0)) {
      throw ContractError("fit_predictor: latency values must be positive");
    }
  }

  LatencyModel model;
  model.feature_max = dataset.feature_max;

  // Split.
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = Rng(split_seed).split("latency_split");
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[split_rng.uniform_int(i)]);
  }
  const auto n_hold = static_cast<std::size_t>(
      std::max(1.0, std::floor(options.holdout_fraction * static_cast<double>(order.size()))));
  std::vector<std::size_t> hold(order.begin(), order.begin() + n_hold);
  std::vector<std::size_t> train(order.begin() + n_hold, order.end());

  // Standardized log targets.
  std::vector<double> logs(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) logs[i] = std::log(samples[i].latency_ms);
  double mean = 0.0;
  for (std::size_t i : train) mean += logs[i];
  mean /= static_cast<double>(train.size());
  double var = 0.0;
  for (std::size_t i : train) var += (logs[i] - mean) * (logs[i] - mean);
  var /= static_cast<double>(train.size());
  const double stddev = std::sqrt(var);
  model.log_mean = mean;
  model.log_std = stddev > 1e-12 ? stddev : 1.0;

  if (stddev <= 1e-12) {
    // Every target equal: predict the constant.
    model.constant_output = true;
    model.constant_value = samples[train.empty() ? 0 : train[0]].latency_ms;
    double err_sum = 0.0;
    std::vector<double> errs;
    for (std::size_t i : hold) {
      const double e = rel_err(model.constant_value, samples[i].latency_ms);
      err_sum += e;
      errs.push_back(e);
    }
    std::sort(errs.begin(), errs.end());
    model.held_out_mean_rel_err = err_sum / static_cast<double>(hold.size());
    model.held_out_median_rel_err = errs[errs.size() / 2];
    return model;
  }

  // 5 -> 64 -> 64 -> 1 rectifier regressor.
  const std::size_t width = 64;
  ParamMap net;
  {
    Rng init = Rng(split_seed).split("latency_init");
    auto dense = [&](const std::string& name, std::size_t in, std::size_t out, double scale) {
      Tensor w({in, out});
      Rng stream = init.split(name);
      for (double& v : w.data()) v = stream.normal() * scale;
      net.emplace(name, std::move(w));
      net.emplace(name + ".b", Tensor::zeros({out}));
    };
    dense("fc1", 5, width, std::sqrt(2.0 / 5.0));
    dense("fc2", width, width, std::sqrt(2.0 / static_cast<double>(width)));
    dense("fc3", width, 1, std::sqrt(1.0 / static_cast<double>(width)));
  }

  OptimizerState state;
  state.kind = OptimizerKind::ADAM;
  OptimizerHyper hyper;

  Rng batch_rng = Rng(split_seed).split("latency_batches");
  std::vector<std::size_t> train_order = train;
  const std::size_t bs = std::min(options.batch_size, train_order.size());
  const std::size_t steps_per_epoch = train_order.size() / bs;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = train_order.size(); i > 1; --i) {
      std::swap(train_order[i - 1], train_order[batch_rng.uniform_int(i)]);
    }
    // Cosine-free simple decay: keep lr constant for the first half, then halve.
    hyper.lr = epoch * 2 < options.epochs ? options.lr : options.lr * 0.5;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<std::size_t> idx(train_order.begin() + s * bs,
                                   train_order.begin() + (s + 1) * bs);
      Tensor x = feature_matrix(samples, idx);
      Tensor y({idx.size(), 1});
      for (std::size_t i = 0; i < idx.size(); ++i) {
        y(i, 0) = (logs[idx[i]] - model.log_mean) / model.log_std;
      }
      Tape tape;
      Value xv = tape.constant(std::move(x));
      Value h1 = tape.relu(tape.add_rowvec(tape.matmul(xv, tape.param("fc1", net.at("fc1"))),
                                           tape.param("fc1.b", net.at("fc1.b"))));
      Value h2 = tape.relu(tape.add_rowvec(tape.matmul(h1, tape.param("fc2", net.at("fc2"))),
                                           tape.param("fc2.b", net.at("fc2.b"))));
      Value out = tape.add_rowvec(tape.matmul(h2, tape.param("fc3", net.at("fc3"))),
                                  tape.param("fc3.b", net.at("fc3.b")));
      Value loss = tape.mse(out, tape.constant(std::move(y)));
      ParamMap grads = tape.backward(loss);
      optimizer_step(net, grads, state, hyper);
    }
  }
  model.net = std::move(net);

  // Held-out relative errors on the original (ms) scale.
  std::vector<double> errs;
  double err_sum = 0.0;
  Tensor xh = feature_matrix(samples, hold);
  Tensor ph = mlp_forward_values(model.net, xh);
  for (std::size_t i = 0; i < hold.size(); ++i) {
    const double pred =
        std::max(std::exp(ph(i, 0) * model.log_std + model.log_mean), model.floor_ms);
    const double e = rel_err(pred, samples[hold[i]].latency_ms);
    errs.push_back(e);
    err_sum += e;
  }
  std::sort(errs.begin(), errs.end());
  model.held_out_mean_rel_err = err_sum / static_cast<double>(hold.size());
  model.held_out_median_rel_err = errs[errs.size() / 2];
  return model;
}

double predict(const LatencyModel& model, const ArchConfig& arch) {
  if (model.constant_output) return std::max(model.constant_value, model.floor_ms);
  Tensor x({1, 5});
  x(0, 0) = arch.l_t / model.feature_max[0];
  x(0, 1) = arch.d_m / model.feature_max[1];
  x(0, 2) = arch.d_q / model.feature_max[2];
  x(0, 3) = arch.d_v / model.feature_max[3];
  x(0, 4) = arch.d_f / model.feature_max[4];
  const Tensor out = mlp_forward_values(model.net, x);
  const double pred = std::exp(out(0, 0) * model.log_std + model.log_mean);
  if (!std::isfinite(pred)) return model.floor_ms;
  return std::max(pred, model.floor_ms);
}

}  // namespace atb
