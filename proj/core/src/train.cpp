#include "atb/train.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "atb/error.hpp"
#include "atb/ops.hpp"
#include "atb/rng.hpp"

namespace atb {

const char* objective_name(Objective o) { return o == Objective::MLM ? "mlm" : "kd"; }

Objective objective_from_name(const std::string& name) {
  if (name == "mlm" || name == "MLM") return Objective::MLM;
  if (name == "kd" || name == "KD") return Objective::KD;
  throw ConfigError("unknown objective \"" + name + "\"");
}

double warmup_lr(double peak, std::size_t step, std::size_t total_steps, double warmup_ratio) {
  if (warmup_ratio <= 0.0) return peak;
  const auto warmup_steps =
      static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  if (warmup_steps == 0 || step >= warmup_steps) return peak;
  return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

BatchStream::BatchStream(const Corpus& corpus, std::size_t batch_size, double mask_prob,
                         std::uint64_t seed)
    : corpus_(corpus), batch_size_(batch_size), mask_prob_(mask_prob), seed_(seed) {
  if (batch_size_ == 0 || batch_size_ > corpus.seqs.size()) {
    throw ContractError("BatchStream: batch size " + std::to_string(batch_size_) +
                        " incompatible with corpus of " + std::to_string(corpus.seqs.size()) +
                        " sequences");
  }
  steps_per_epoch_ = corpus.seqs.size() / batch_size_;
}

Batch BatchStream::batch_for_step(std::size_t step) {
  const std::size_t epoch = step / steps_per_epoch_;
  if (epoch != perm_epoch_) {
    perm_.resize(corpus_.seqs.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
    Rng rng = Rng(seed_).split("data").split(epoch);
    for (std::size_t i = perm_.size(); i > 1; --i) {
      std::swap(perm_[i - 1], perm_[rng.uniform_int(i)]);
    }
    perm_epoch_ = epoch;
  }
  const std::size_t pos = (step % steps_per_epoch_) * batch_size_;
  std::span<const std::size_t> indices(perm_.data() + pos, batch_size_);
  const std::uint64_t mask_seed = Rng(seed_).split("mask").split(step).seed();
  return mask_batch(corpus_, indices, mask_prob_, mask_seed);
}

namespace {

Batch batch_rows(const Batch& b, std::size_t begin, std::size_t end) {
  Batch out;
  out.input_ids.assign(b.input_ids.begin() + begin, b.input_ids.begin() + end);
  out.targets.assign(b.targets.begin() + begin, b.targets.begin() + end);
  out.original_ids.assign(b.original_ids.begin() + begin, b.original_ids.begin() + end);
  return out;
}

struct KdSeqLoss {
  Value loss;
  double value = 0.0;
};

// Projected-hidden MSE plus mean per-head MSE of last-layer attention maps.
KdSeqLoss build_kd_seq_loss(Tape& tape, const ParamMap& params, const ArchConfig& arch,
                            std::size_t vocab, std::size_t max_seq, const Model& teacher,
                            std::span<const int> input) {
  if (arch.h != teacher.arch.h) {
    throw ContractError("kd_loss: student head count " + std::to_string(arch.h) +
                        " differs from teacher's " + std::to_string(teacher.arch.h));
  }
  if (!params.count("kd_proj")) {
    throw ContractError("kd_loss: parameters lack the kd_proj projection");
  }
  TapedEncoderOut student =
      encoder_forward_taped(tape, params, arch, vocab, max_seq, input, /*want_logits=*/false);
  EncoderOut t_out = encoder_forward(teacher, input, /*want_logits=*/false);

  Value proj = tape.param("kd_proj", params.at("kd_proj"));
  Value projected = tape.matmul(student.hidden, proj);
  Value loss = tape.mse(projected, tape.constant(t_out.hidden));

  const auto& s_attn = student.attn.back();
  const auto& t_attn = t_out.attn.back();
  const double head_w = 1.0 / static_cast<double>(s_attn.size());
  for (std::size_t i = 0; i < s_attn.size(); ++i) {
    Value head_mse = tape.mse(s_attn[i], tape.constant(t_attn[i]));
    loss = tape.add(loss, tape.mul_scalar(head_mse, head_w));
  }
  return {loss, tape.value(loss)[0]};
}

}  // namespace

ParamMap batch_gradients(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                         std::size_t max_seq, const Batch& batch, Objective objective,
                         const Model* teacher, double* loss_sum, double* denom) {
  ParamMap total;
  double sum = 0.0;
  double den = 0.0;

  if (objective == Objective::MLM) {
    den = static_cast<double>(batch.masked_positions());
    if (den > 0.0) {
      const double seed_grad = 1.0 / den;
      for (std::size_t s = 0; s < batch.input_ids.size(); ++s) {
        Tape tape;
        TapedEncoderOut out = encoder_forward_taped(tape, params, arch, vocab, max_seq,
                                                    batch.input_ids[s], /*want_logits=*/true);
        std::size_t count = 0;
        Value loss = tape.cross_entropy_sum(out.logits, batch.targets[s], &count);
        sum += tape.value(loss)[0];
        if (count == 0) continue;  // nothing masked in this sequence
        ParamMap g = tape.backward(loss, seed_grad);
        if (total.empty()) {
          total = std::move(g);
        } else {
          add_param_maps(total, g);
        }
      }
    }
  } else {
    if (!teacher) throw ContractError("batch_gradients: KD objective requires a teacher");
    den = static_cast<double>(batch.input_ids.size());
    const double seed_grad = 1.0 / den;
    for (std::size_t s = 0; s < batch.input_ids.size(); ++s) {
      Tape tape;
      KdSeqLoss l = build_kd_seq_loss(tape, params, arch, vocab, max_seq, *teacher,
                                      batch.input_ids[s]);
      sum += l.value;
      ParamMap g = tape.backward(l.loss, seed_grad);
      if (total.empty()) {
        total = std::move(g);
      } else {
        add_param_maps(total, g);
      }
    }
  }

  if (total.empty()) total = zeros_like(params);
  if (loss_sum) *loss_sum = sum;
  if (denom) *denom = den;
  return total;
}

double mlm_loss(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                std::size_t max_seq, const Batch& batch) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < batch.input_ids.size(); ++s) {
    EncoderOut out = encoder_forward(params, arch, vocab, max_seq, batch.input_ids[s], true);
    std::size_t c = 0;
    sum += ops::cross_entropy_sum(out.logits, batch.targets[s], &c);
    count += c;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double mlm_loss(const Model& model, const Batch& batch) {
  return mlm_loss(model.params, model.arch, model.vocab, model.max_seq, batch);
}

double kd_loss(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
               std::size_t max_seq, const Model& teacher, const Batch& batch) {
  double sum = 0.0;
  for (std::size_t s = 0; s < batch.input_ids.size(); ++s) {
    Tape tape;
    sum += build_kd_seq_loss(tape, params, arch, vocab, max_seq, teacher,
                             batch.input_ids[s]).value;
  }
  return batch.input_ids.empty() ? 0.0 : sum / static_cast<double>(batch.input_ids.size());
}

namespace {

void clip_gradients(ParamMap& grads, double clip) {
  if (clip <= 0.0) return;
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > clip) scale_param_map(grads, clip / norm);
}

std::size_t resolve_total_steps(const TrainConfig& config, const BatchStream& stream) {
  const std::size_t by_epochs = config.epochs * stream.steps_per_epoch();
  if (config.max_steps > 0) return config.max_steps;
  return by_epochs;
}

void ensure_kd_projection(ParamMap& params, int d_m, const Model& teacher,
                          std::uint64_t seed) {
  if (params.count("kd_proj")) return;
  Tensor proj({static_cast<std::size_t>(d_m), static_cast<std::size_t>(teacher.arch.d_m)});
  Rng stream = Rng(seed).split("kd_proj");
  for (double& v : proj.data()) v = stream.trunc_normal(kInitStd);
  params.emplace("kd_proj", std::move(proj));
}

}  // namespace

LossTrace train_model(Model& model, const Corpus& corpus, const TrainConfig& config,
                      const Model* teacher) {
  if (config.objective == Objective::KD) {
    if (!teacher) throw ContractError("train_model: KD objective requires a teacher");
    ensure_kd_projection(model.params, model.arch.d_m, *teacher, config.seed);
  }
  BatchStream stream(corpus, config.batch_size, config.mask_prob, config.seed);
  const std::size_t total = resolve_total_steps(config, stream);

  OptimizerState state;
  state.kind = config.optimizer;
  OptimizerHyper hyper;
  hyper.weight_decay = config.weight_decay;

  LossTrace trace;
  trace.reserve(total);
  for (std::size_t step = 0; step < total; ++step) {
    Batch batch = stream.batch_for_step(step);
    double loss_sum = 0.0, denom = 0.0;
    ParamMap grads = batch_gradients(model.params, model.arch, model.vocab, model.max_seq,
                                     batch, config.objective, teacher, &loss_sum, &denom);
    clip_gradients(grads, config.grad_clip);
    hyper.lr = warmup_lr(config.lr, step, total, config.warmup_ratio);
    optimizer_step(model.params, grads, state, hyper);
    trace.push_back(TraceRow{step, stream.epoch_of_step(step), hyper.lr,
                             denom > 0.0 ? loss_sum / denom : 0.0});
  }
  return trace;
}

TrainedModel standalone_train(const ArchConfig& arch, const Corpus& corpus,
                              const TrainConfig& config, const Model* teacher) {
  require_valid(arch);
  TrainedModel out{
      init_model(arch, corpus.vocab, corpus.seq_len, Rng(config.seed).split("init").seed()),
      {}};
  out.trace = train_model(out.model, corpus, config, teacher);
  return out;
}

TrainedModel further_train(const SuperNet& net, const ArchConfig& arch,
                           ExtractStrategy strategy, const Corpus& corpus,
                           const TrainConfig& config, const Model* teacher) {
  SubModelView view = extract_submodel(net, arch, strategy);
  TrainedModel out{materialize(net, view), {}};
  TrainConfig ft = config;
  ft.warmup_ratio = 0.0;  // further training runs without warmup
  out.trace = train_model(out.model, corpus, ft, teacher);
  return out;
}

LossTrace oneshot_train(SuperNet& net, const Corpus& corpus, const SearchSpace& space,
                        const TrainConfig& config, const Model* teacher,
                        OneshotObserver* observer) {
  space.check();
  const std::size_t n_workers = config.workers;
  const std::size_t m_rounds = config.samples_per_batch;
  if (n_workers < 1 || m_rounds < 1) {
    throw ContractError("oneshot_train: workers and samples_per_batch must be >= 1");
  }
  if (config.batch_size % n_workers != 0) {
    throw ContractError("oneshot_train: batch size " + std::to_string(config.batch_size) +
                        " not divisible by " + std::to_string(n_workers) + " workers");
  }
  const ArchConfig space_max = space.max_arch();
  if (!fits_within(space_max, net.config.arch)) {
    throw ContractError("oneshot_train: search space upper bound " + format_compact(space_max) +
                        " does not fit the supernet " + format_compact(net.config.arch));
  }
  const ExtractStrategy strategy = config.objective == Objective::KD
                                       ? ExtractStrategy::PER_HEAD_SLICE
                                       : ExtractStrategy::HEAD_PREFIX;
  // Every point the space can emit must extract under the chosen strategy;
  // failing here beats a ContractError in the middle of a long run.
  {
    const int sup_per_head = net.config.arch.d_q / net.config.arch.h;
    if (strategy == ExtractStrategy::HEAD_PREFIX) {
      if (space.mode == SpaceMode::PRETRAIN) {
        if (space.head_dim != sup_per_head) {
          throw ContractError("oneshot_train: space head_dim " + std::to_string(space.head_dim) +
                              " differs from the supernet per-head width " +
                              std::to_string(sup_per_head));
        }
      } else {
        for (int v : space.d_qkv) {
          if (v / space.heads[0] != sup_per_head) {
            throw ContractError("oneshot_train: d_qkv " + std::to_string(v) +
                                " is not whole supernet heads (per-head width " +
                                std::to_string(sup_per_head) + ")");
          }
        }
      }
    } else {
      for (int h : space.heads) {
        if (h != net.config.arch.h) {
          throw ContractError("oneshot_train: per-head slicing requires every sampled head "
                              "count to equal the supernet's (" +
                              std::to_string(net.config.arch.h) + "), space offers " +
                              std::to_string(h));
        }
      }
    }
  }
  if (config.objective == Objective::KD) {
    if (!teacher) throw ContractError("oneshot_train: KD objective requires a teacher");
    if (teacher->arch.h != net.config.arch.h) {
      throw ContractError("oneshot_train: teacher head count must equal the supernet's for "
                          "attention distillation");
    }
    add_kd_projection(net, teacher->arch.d_m, config.seed);
  }

  BatchStream stream(corpus, config.batch_size, config.mask_prob, config.seed);
  const std::size_t total = resolve_total_steps(config, stream);
  const std::size_t sub_batch = config.batch_size / n_workers;

  Rng arch_rng = Rng(config.seed).split("arch");

  OptimizerState state;
  state.kind = config.optimizer;
  OptimizerHyper hyper;
  hyper.weight_decay = config.weight_decay;

  LossTrace trace;
  trace.reserve(total);

  for (std::size_t step = 0; step < total; ++step) {
    Batch batch = stream.batch_for_step(step);

    // Round-major sampling: archs[m * N + n] goes to worker n in round m.
    std::vector<ArchConfig> archs;
    archs.reserve(m_rounds * n_workers);
    for (std::size_t m = 0; m < m_rounds; ++m) {
      for (std::size_t n = 0; n < n_workers; ++n) archs.push_back(sample_arch(space, arch_rng));
    }

    std::vector<ParamMap> worker_buffers(n_workers);
    std::vector<double> loss_sums(m_rounds * n_workers, 0.0);
    std::vector<double> denoms(m_rounds * n_workers, 0.0);
    std::vector<ParamMap> contributions;
    const bool want_contrib = observer && observer->want_contributions;
    if (want_contrib) contributions.resize(m_rounds * n_workers);

    auto worker_task = [&](std::size_t n) {
      ParamMap buffer = zeros_like(net.params);
      for (std::size_t m = 0; m < m_rounds; ++m) {
        const ArchConfig& arch = archs[m * n_workers + n];
        SubModelView view = extract_submodel(net, arch, strategy);
        ParamMap sub_params = gather(net, view);
        Batch sb = batch_rows(batch, n * sub_batch, (n + 1) * sub_batch);
        double ls = 0.0, dn = 0.0;
        ParamMap grads = batch_gradients(sub_params, arch, net.config.vocab, net.config.max_seq,
                                         sb, config.objective, teacher, &ls, &dn);
        scatter_gradients(view, grads, buffer);
        loss_sums[m * n_workers + n] = ls;
        denoms[m * n_workers + n] = dn;
        if (want_contrib) {
          ParamMap c = zeros_like(net.params);
          scatter_gradients(view, grads, c);
          contributions[m * n_workers + n] = std::move(c);
        }
      }
      worker_buffers[n] = std::move(buffer);
    };

    if (config.parallel && n_workers > 1) {
      std::vector<std::thread> threads;
      threads.reserve(n_workers);
      for (std::size_t n = 0; n < n_workers; ++n) threads.emplace_back(worker_task, n);
      for (auto& t : threads) t.join();
    } else {
      for (std::size_t n = 0; n < n_workers; ++n) worker_task(n);
    }

    // Fixed-order merge, then average over all

    ParamMap merged = std::move(worker_buffers[0]);
    for (std::size_t n = 1; n < n_workers; ++n) add_param_maps(merged, worker_buffers[n]);
    scale_param_map(merged, 1.0 / static_cast<double>(n_workers * m_rounds));
    clip_gradients(merged, config.grad_clip);

    hyper.lr = warmup_lr(config.lr, step, total, config.warmup_ratio);
    optimizer_step(net.params, merged, state, hyper);

    double loss_total = 0.0, denom_total = 0.0;
    for (std::size_t i = 0; i < loss_sums.size(); ++i) {
      loss_total += loss_sums[i];
      denom_total += denoms[i];
    }
    const double step_loss = denom_total > 0.0 ? loss_total / denom_total : 0.0;
    trace.push_back(TraceRow{step, stream.epoch_of_step(step), hyper.lr, step_loss});

    if (observer && observer->on_step) {
      observer->on_step(step, archs, want_contrib ? &contributions : nullptr, merged, hyper.lr);
    }
  }
  return trace;
}

}  // namespace atb
