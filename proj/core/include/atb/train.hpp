#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "atb/corpus.hpp"
#include "atb/model.hpp"
#include "atb/optim.hpp"
#include "atb/search.hpp"
#include "atb/supernet.hpp"

namespace atb {

enum class Objective { MLM, KD };

const char* objective_name(Objective o);
Objective objective_from_name(const std::string& name);

struct TrainConfig {
  double lr = 1e-5;
  double warmup_ratio = 0.1;
  std::size_t batch_size = 256;
  std::size_t epochs = 5;
  std::size_t workers = 16;           // N in the batch-wise schedule
  std::size_t samples_per_batch = 3;  // M
  std::uint64_t seed = 0;
  Objective objective = Objective::MLM;
  OptimizerKind optimizer = OptimizerKind::ADAM;
  double mask_prob = 0.15;
  std::size_t max_steps = 0;  // 0: run the full epochs; otherwise stop early
  double weight_decay = 0.0;  // exposed, off by default
  double grad_clip = 0.0;     // global-norm clip; 0 disables
  bool parallel = false;      // run the N workers on threads
};

struct TraceRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};
using LossTrace = std::vector<TraceRow>;

// lr(t) = peak * t / ceil(warmup_ratio * total) below the threshold, then
// peak. t is the 0-based step index, so lr(0) == 0 whenever warmup is on.
double warmup_lr(double peak, std::size_t step, std::size_t total_steps, double warmup_ratio);

// Deterministic shuffled-batch sequence over a corpus: both the stand-alone
// and the one-shot trainer consume exactly this stream, so a degenerate
// one-shot run can be compared bitwise against stand-alone training.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, std::size_t batch_size, double mask_prob,
              std::uint64_t seed);

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  // Deterministic function of (seed, step) alone.
  Batch batch_for_step(std::size_t step);
  std::size_t epoch_of_step(std::size_t step) const { return step / steps_per_epoch_; }

 private:
  const Corpus& corpus_;
  std::size_t batch_size_;
  double mask_prob_;
  std::uint64_t seed_;
  std::size_t steps_per_epoch_;
  std::vector<std::size_t> perm_;
  std::size_t perm_epoch_ = static_cast<std::size_t>(-1);
};

// MLM: pooled mean cross entropy over the masked positions of the batch.
// KD: per-sequence MSE of projected final hidden states against the teacher
// plus MSE of last-layer attention maps (1:1), averaged over sequences.
// Gradients cover every tensor in `params`; loss_sum/denom return the pooled
// numerator and normalizer.
ParamMap batch_gradients(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                         std::size_t max_seq, const Batch& batch, Objective objective,
                         const Model* teacher, double* loss_sum, double* denom);

double mlm_loss(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                std::size_t max_seq, const Batch& batch);
double mlm_loss(const Model& model, const Batch& batch);

// Requires matching head counts (the PER_HEAD_SLICE contract); `params` must
// contain the "kd_proj" student->teacher projection.
double kd_loss(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
               std::size_t max_seq, const Model& teacher, const Batch& batch);

// In-place training of a model's parameters (the stand-alone / further paths).
LossTrace train_model(Model& model, const Corpus& corpus, const TrainConfig& config,
                      const Model* teacher = nullptr);

struct TrainedModel {
  Model model;
  LossTrace trace;
};

// Fresh seeded init, then train_model.
TrainedModel standalone_train(const ArchConfig& arch, const Corpus& corpus,
                              const TrainConfig& config, const Model* teacher = nullptr);

// materialize(extract_submodel(...)) then train with warmup forced to zero.
// The supernet itself is left untouched.
TrainedModel further_train(const SuperNet& net, const ArchConfig& arch,
                           ExtractStrategy strategy, const Corpus& corpus,
                           const TrainConfig& config, const Model* teacher = nullptr);

// Per-step instrumentation hook for the one-shot trainer.
struct OneshotObserver {
  bool want_contributions = false;
  // (step, sampled archs in round-major order, per-contribution scattered
  //  gradients when requested, merged averaged gradient, applied lr)
  std::function<void(std::size_t, const std::vector<ArchConfig>&,
                     const std::vector<ParamMap>*, const ParamMap&, double)>
      on_step;
};

// Batch-wise one-shot training: each batch is split into `workers`
// sub-batches; `samples_per_batch` rounds sample one architecture per worker;
// the optimizer applies the average of all workers*samples gradients.
// MLM extracts with HEAD_PREFIX, KD with PER_HEAD_SLICE.
LossTrace oneshot_train(SuperNet& net, const Corpus& corpus, const SearchSpace& space,
                        const TrainConfig& config, const Model* teacher = nullptr,
                        OneshotObserver* observer = nullptr);

}  // namespace atb
