#include <cmath>

#include <doctest.h>

#include "atb/corpus.hpp"
#include "atb/error.hpp"
#include "atb/grad_check.hpp"
#include "atb/ops.hpp"
#include "atb/rng.hpp"
#include "atb/train.hpp"

using namespace atb;

namespace {

SuperConfig tiny_super() {
  SuperConfig c;
  c.arch = ArchConfig{2, 16, 16, 16, 16, 32, 16, 2};  // per-head width 8
  c.vocab = 32;
  c.max_seq = 16;
  return c;
}

SearchSpace singleton_space() {
  SearchSpace s;
  s.mode = SpaceMode::PRETRAIN;
  s.layers = {1};
  s.d_model = {8};
  s.d_ffn = {16};
  s.heads = {1};
  s.head_dim = 8;
  return s;
}

SearchSpace both_strategy_space() {
  // Full q/k/v width with the supernet's head count, so the same points are
  // extractable under either strategy.
  SearchSpace s;
  s.mode = SpaceMode::KD;
  s.layers = {1, 2};
  s.d_model = {8, 16};
  s.d_ffn = {16, 32};
  s.heads = {2};
  s.d_qkv = {16};
  return s;
}

Batch whole_corpus_batch(const Corpus& c, double mask_prob, std::uint64_t seed) {
  std::vector<std::size_t> idx(c.seqs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return mask_batch(c, idx, mask_prob, seed);
}

}  // namespace

TEST_SUITE("warmup") {
  TEST_CASE("linear ramp then constant") {
    const double peak = 2e-3;
    const std::size_t total = 100;
    const double ratio = 0.1;  // 10 warmup steps
    CHECK(warmup_lr(peak, 0, total, ratio) == 0.0);
    CHECK(warmup_lr(peak, 5, total, ratio) == doctest::Approx(peak * 0.5).epsilon(1e-12));
    CHECK(warmup_lr(peak, 10, total, ratio) == peak);
    CHECK(warmup_lr(peak, 99, total, ratio) == peak);
  }

  TEST_CASE("warmup steps use the ceiling") {
    // ceil(0.25 * 10) = 3 warmup steps
    CHECK(warmup_lr(1.0, 2, 10, 0.25) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(warmup_lr(1.0, 3, 10, 0.25) == 1.0);
  }

  TEST_CASE("zero ratio disables the ramp") {
    CHECK(warmup_lr(0.5, 0, 100, 0.0) == 0.5);
  }
}

TEST_SUITE("mlm_loss") {
  TEST_CASE("zero-weight model prices every token at ln(V)") {
    Model m = init_model(ArchConfig{1, 8, 8, 8, 8, 16, 8, 1}, 32, 16, 5);
    m.params.at("tok_emb").fill(0.0);  // logits become exactly zero rows
    Corpus c = make_synthetic_corpus(32, 16, 8, 6);
    Batch b = whole_corpus_batch(c, 0.25, 7);
    REQUIRE(b.masked_positions() > 0);
    CHECK(mlm_loss(m, b) == doctest::Approx(std::log(32.0)).epsilon(1e-9));
  }

  TEST_CASE("no masked positions costs zero") {
    Model m = init_model(ArchConfig{1, 8, 8, 8, 8, 16, 8, 1}, 32, 16, 8);
    Corpus c = make_synthetic_corpus(32, 16, 4, 9);
    Batch b = whole_corpus_batch(c, 1e-12, 10);
    REQUIRE(b.masked_positions() == 0);
    CHECK(mlm_loss(m, b) == 0.0);
  }
}

TEST_SUITE("kd_loss") {
  TEST_CASE("student equal to teacher with identity projection scores zero") {
    const ArchConfig a{2, 8, 8, 8, 8, 16, 8, 2};
    Model teacher = init_model(a, 32, 16, 11);
    ParamMap student = teacher.params;
    Tensor eye({8, 8});
    for (int i = 0; i < 8; ++i) eye(i, i) = 1.0;
    student.emplace("kd_proj", eye);
    Corpus c = make_synthetic_corpus(32, 16, 4, 12);
    Batch b = whole_corpus_batch(c, 0.15, 13);
    CHECK(kd_loss(student, a, 32, 16, teacher, b) == doctest::Approx(0.0).epsilon(1e-18));
  }

  TEST_CASE("zero teacher hidden and zero projection isolate the attention term") {
    const ArchConfig a{1, 8, 8, 8, 8, 16, 8, 2};
    Model teacher = init_model(a, 32, 16, 14);
    // Zero gain + zero bias on the final norm zeroes the teacher's output.
    teacher.params.at("layer0.ln2.g").fill(0.0);
    teacher.params.at("layer0.ln2.b").fill(0.0);
    Model student_m = init_model(a, 32, 16, 15);
    ParamMap student = student_m.params;
    student.emplace("kd_proj", Tensor({8, 8}));  // zero projection
    Corpus c = make_synthetic_corpus(32, 16, 4, 16);
    Batch b = whole_corpus_batch(c, 0.15, 17);

    const double loss = kd_loss(student, a, 32, 16, teacher, b);
    // Expected: mean over sequences of the per-head attention MSE only.
    double expect = 0.0;
    for (const auto& ids : b.input_ids) {
      EncoderOut s_out = encoder_forward(student, a, 32, 16, ids, false);
      EncoderOut t_out = encoder_forward(teacher, ids, false);
      double term = 0.0;
      for (std::size_t h = 0; h < 2; ++h) {
        term += ops::mse(s_out.attn.back()[h], t_out.attn.back()[h]) / 2.0;
      }
      expect += term;
    }
    expect /= static_cast<double>(b.input_ids.size());
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("head-count mismatch is rejected") {
    const ArchConfig student_arch{1, 8, 8, 8, 8, 16, 8, 1};
    const ArchConfig teacher_arch{1, 8, 8, 8, 8, 16, 8, 2};
    Model teacher = init_model(teacher_arch, 32, 16, 18);
    Model student = init_model(student_arch, 32, 16, 19);
    student.params.emplace("kd_proj", Tensor({8, 8}));
    Corpus c = make_synthetic_corpus(32, 16, 2, 20);
    Batch b = whole_corpus_batch(c, 0.15, 21);
    CHECK_THROWS_AS(kd_loss(student.params, student_arch, 32, 16, teacher, b), ContractError);
  }

  TEST_CASE("kd gradients pass the central-difference oracle") {
    const ArchConfig a{1, 8, 8, 8, 8, 12, 8, 2};
    Model teacher = init_model(a, 16, 8, 22);
    Model student = init_model(a, 16, 8, 23);
    student.params.emplace("kd_proj", init_model(a, 16, 8, 24).params.at("layer0.wq"));
    const std::vector<int> ids{3, 7, 1, 11};
    Batch b;
    b.input_ids = {ids};
    b.targets = {{-1, -1, -1, -1}};
    b.original_ids = {ids};

    auto f = [&](const ParamMap& p) { return kd_loss(p, a, 16, 8, teacher, b); };
    double loss_sum = 0.0, denom = 0.0;
    ParamMap analytic = batch_gradients(student.params, a, 16, 8, b, Objective::KD, &teacher,
                                        &loss_sum, &denom);
    GradCheckResult r = finite_diff_check(f, student.params, 1e-4, analytic, 10, 25);
    CAPTURE(r.worst_param);
    CHECK(r.max_rel_error <= 1e-3);
  }
}

TEST_SUITE("standalone_train") {
  TEST_CASE("initial loss sits near ln(V) and the trace trends down") {
    Corpus c = make_synthetic_corpus(64, 16, 512, 31);
    TrainConfig cfg;
    cfg.lr = 2e-3;
    cfg.warmup_ratio = 0.0;
    cfg.batch_size = 16;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.max_steps = 200;
    cfg.seed = 32;
    TrainedModel tm = standalone_train(ArchConfig{1, 16, 16, 16, 16, 32, 16, 2}, c, cfg);
    CHECK(tm.trace.size() == 200);
    CHECK(tm.trace.front().loss == doctest::Approx(std::log(64.0)).epsilon(0.15));
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      head += tm.trace[i].loss;
      tail += tm.trace[tm.trace.size() - 1 - i].loss;
    }
    CHECK(tail < head);  // seeded run decreases over 200 steps
  }

  TEST_CASE("same seed twice gives bitwise-identical parameters") {
    Corpus c = make_synthetic_corpus(32, 16, 128, 33);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 8;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.max_steps = 30;
    cfg.seed = 34;
    TrainedModel a = standalone_train(ArchConfig{1, 8, 8, 8, 8, 16, 8, 1}, c, cfg);
    TrainedModel b = standalone_train(ArchConfig{1, 8, 8, 8, 8, 16, 8, 1}, c, cfg);
    CHECK(bitwise_equal(a.model.params, b.model.params));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].loss == b.trace[i].loss);
    }
  }

  TEST_CASE("a small model beats 0.9 ln(V) within 500 steps") {
    Corpus c = make_synthetic_corpus(64, 16, 1024, 35);
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.warmup_ratio = 0.05;
    cfg.batch_size = 16;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.max_steps = 500;
    cfg.seed = 36;
    TrainedModel tm = standalone_train(ArchConfig{2, 16, 16, 16, 16, 32, 16, 2}, c, cfg);
    double best = 1e9;
    for (const TraceRow& r : tm.trace) best = std::min(best, r.loss);
    CHECK(best < 0.9 * std::log(64.0));
  }
}

TEST_SUITE("oneshot") {
  TEST_CASE("degenerate schedule reproduces stand-alone training bitwise") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 128, 41);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.warmup_ratio = 0.0;
    cfg.batch_size = 8;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.optimizer = OptimizerKind::SGD;
    cfg.max_steps = 25;
    cfg.seed = 42;

    SuperNet net = build_supernet(sc, 43);
    const ArchConfig arch = singleton_space().make_arch(1, 8, 16, 1);
    Model reference = materialize(net, extract_submodel(net, arch, ExtractStrategy::HEAD_PREFIX));

    LossTrace one_trace = oneshot_train(net, c, singleton_space(), cfg);
    LossTrace ref_trace = train_model(reference, c, cfg);

    SubModelView view = extract_submodel(net, arch, ExtractStrategy::HEAD_PREFIX);
    ParamMap extracted = gather(net, view);
    CHECK(bitwise_equal(extracted, reference.params));
    REQUIRE(one_trace.size() == ref_trace.size());
    for (std::size_t i = 0; i < one_trace.size(); ++i) {
      CHECK(one_trace[i].loss == ref_trace[i].loss);
      CHECK(one_trace[i].lr == ref_trace[i].lr);
    }
  }

  TEST_CASE("parameters outside every sampled view stay untouched under SGD") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 64, 44);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.batch_size = 8;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.optimizer = OptimizerKind::SGD;
    cfg.warmup_ratio = 0.0;
    cfg.max_steps = 10;
    cfg.seed = 45;
    SuperNet net = build_supernet(sc, 46);
    const ParamMap initial = net.params;
    oneshot_train(net, c, singleton_space(), cfg);

    // The singleton space touches layer 0 only, d_m 8, d_q 8, d_f 16.
    const Tensor& wq_before = initial.at("layer0.wq");
    const Tensor& wq_after = net.params.at("layer0.wq");
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t col = 8; col < 16; ++col) {
        CHECK(wq_after(r, col) == wq_before(r, col));  // head 1 never sampled
      }
    }
    CHECK(bitwise_equal(ParamMap{{"w", initial.at("layer1.wq")}},
                        ParamMap{{"w", net.params.at("layer1.wq")}}));
    const Tensor& emb_before = initial.at("tok_emb");
    const Tensor& emb_after = net.params.at("tok_emb");
    for (std::size_t r = 0; r < emb_before.rows(); ++r) {
      for (std::size_t col = 8; col < 16; ++col) {
        CHECK(emb_after(r, col) == emb_before(r, col));
      }
    }
  }

  TEST_CASE("four worker threads match the sequential reference") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 128, 47);
    SearchSpace space;
    space.mode = SpaceMode::PRETRAIN;
    space.layers = {1, 2};
    space.d_model = {8, 16};
    space.d_ffn = {16, 32};
    space.heads = {1, 2};
    space.head_dim = 8;

    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 16;
    cfg.workers = 4;
    cfg.samples_per_batch = 2;
    cfg.max_steps = 8;
    cfg.seed = 48;

    SuperNet parallel_net = build_supernet(sc, 49);
    SuperNet sequential_net = build_supernet(sc, 49);
    TrainConfig par = cfg;
    par.parallel = true;
    TrainConfig seq = cfg;
    seq.parallel = false;
    oneshot_train(parallel_net, c, space, par);
    oneshot_train(sequential_net, c, space, seq);
    CHECK(max_rel_diff(parallel_net.params, sequential_net.params) <= 1e-6);
  }

  TEST_CASE("the applied update is the average of all scattered gradients") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 64, 50);
    SearchSpace space;
    space.mode = SpaceMode::PRETRAIN;
    space.layers = {1, 2};
    space.d_model = {8, 16};
    space.d_ffn = {16, 32};
    space.heads = {1, 2};
    space.head_dim = 8;

    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.warmup_ratio = 0.0;
    cfg.batch_size = 8;
    cfg.workers = 2;
    cfg.samples_per_batch = 3;
    cfg.optimizer = OptimizerKind::SGD;
    cfg.max_steps = 2;
    cfg.seed = 51;

    SuperNet net = build_supernet(sc, 52);
    ParamMap before = net.params;

    OneshotObserver obs;
    obs.want_contributions = true;
    std::size_t checked = 0;
    obs.on_step = [&](std::size_t step, const std::vector<ArchConfig>& archs,
                      const std::vector<ParamMap>* contribs, const ParamMap& merged, double lr) {
      REQUIRE(contribs != nullptr);
      REQUIRE(archs.size() == 6);  // N * M
      REQUIRE(contribs->size() == 6);
      // Worker-major then round-major accumulation mirrors the trainer's
      // merge order.
      ParamMap sum = zeros_like(merged);
      for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t m = 0; m < 3; ++m) add_param_maps(sum, (*contribs)[m * 2 + n]);
      }
      scale_param_map(sum, 1.0 / 6.0);
      CHECK(max_rel_diff(sum, merged, 1e-14) <= 1e-9);
      // SGD: the parameter displacement is exactly -lr * merged.
      for (const auto& [name, t] : merged) {
        const Tensor& b = before.at(name);
        const Tensor& a = net.params.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
          CHECK(a[i] == b[i] - lr * t[i]);
        }
      }
      before = net.params;
      ++checked;
      (void)step;
      (void)lr;
    };
    oneshot_train(net, c, space, cfg, nullptr, &obs);
    CHECK(checked == 2);
  }

  TEST_CASE("objective switch leaves the sampled architecture stream unchanged") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 64, 53);
    const SearchSpace space = both_strategy_space();
    Model teacher = init_model(ArchConfig{2, 16, 16, 16, 16, 32, 16, 2}, sc.vocab, sc.max_seq, 54);

    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 8;
    cfg.workers = 2;
    cfg.samples_per_batch = 2;
    cfg.max_steps = 3;
    cfg.seed = 55;

    auto collect = [&](Objective obj, const Model* t) {
      SuperNet net = build_supernet(sc, 56);
      TrainConfig local = cfg;
      local.objective = obj;
      std::vector<ArchConfig> seen;
      OneshotObserver obs;
      obs.on_step = [&](std::size_t, const std::vector<ArchConfig>& archs,
                        const std::vector<ParamMap>*, const ParamMap&, double) {
        seen.insert(seen.end(), archs.begin(), archs.end());
      };
      oneshot_train(net, c, space, local, t, &obs);
      return seen;
    };
    const auto mlm_archs = collect(Objective::MLM, nullptr);
    const auto kd_archs = collect(Objective::KD, &teacher);
    REQUIRE(mlm_archs.size() == kd_archs.size());
    for (std::size_t i = 0; i < mlm_archs.size(); ++i) CHECK(mlm_archs[i] == kd_archs[i]);
  }

  TEST_CASE("batch size must divide across workers") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 64, 57);
    SuperNet net = build_supernet(sc, 58);
    TrainConfig cfg;
    cfg.batch_size = 10;
    cfg.workers = 4;
    cfg.max_steps = 1;
    CHECK_THROWS_AS(oneshot_train(net, c, singleton_space(), cfg), ContractError);
  }

  TEST_CASE("strategy-incompatible spaces are rejected before training starts") {
    const SuperConfig sc = tiny_super();  // per-head width 8, h = 2
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 64, 59);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.max_steps = 1;
    cfg.seed = 60;

    // MLM extracts whole heads, so a KD-style space with a narrow d_qkv
    // (per-head 4 != 8) cannot be sampled from.
    SearchSpace narrow;
    narrow.mode = SpaceMode::KD;
    narrow.layers = {1};
    narrow.d_model = {8};
    narrow.d_ffn = {16};
    narrow.heads = {2};
    narrow.d_qkv = {8, 16};
    {
      SuperNet net = build_supernet(sc, 61);
      CHECK_THROWS_AS(oneshot_train(net, c, narrow, cfg), ContractError);
    }

    // KD slices per head, so a pretrain-style space offering head counts
    // other than the supernet's is rejected.
    SearchSpace heads_vary;
    heads_vary.mode = SpaceMode::PRETRAIN;
    heads_vary.layers = {1};
    heads_vary.d_model = {8};
    heads_vary.d_ffn = {16};
    heads_vary.heads = {1, 2};
    heads_vary.head_dim = 8;
    {
      SuperNet net = build_supernet(sc, 62);
      Model teacher = init_model(sc.arch, sc.vocab, sc.max_seq, 63);
      TrainConfig kd_cfg = cfg;
      kd_cfg.objective = Objective::KD;
      CHECK_THROWS_AS(oneshot_train(net, c, heads_vary, kd_cfg, &teacher), ContractError);
    }
  }
}

TEST_SUITE("further_train") {
  TEST_CASE("starts from the extracted weights, not a fresh init") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 128, 61);
    SuperNet net = build_supernet(sc, 62);
    const ArchConfig arch{1, 8, 8, 8, 8, 16, 8, 1};

    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.warmup_ratio = 0.5;  // forced to zero inside further_train
    cfg.batch_size = 8;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.max_steps = 1;
    cfg.seed = 63;

    Model snapshot = materialize(net, extract_submodel(net, arch, ExtractStrategy::HEAD_PREFIX));
    BatchStream stream(c, cfg.batch_size, cfg.mask_prob, cfg.seed);
    const double eval_loss = mlm_loss(snapshot, stream.batch_for_step(0));

    TrainedModel tm = further_train(net, arch, ExtractStrategy::HEAD_PREFIX, c, cfg);
    REQUIRE(tm.trace.size() == 1);
    CHECK(tm.trace[0].loss == eval_loss);
    CHECK(tm.trace[0].lr == cfg.lr);  // no warmup: full rate from step 0
  }

  TEST_CASE("the supernet is left bitwise intact") {
    const SuperConfig sc = tiny_super();
    Corpus c = make_synthetic_corpus(sc.vocab, sc.max_seq, 64, 64);
    SuperNet net = build_supernet(sc, 65);
    const ParamMap before = net.params;
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 8;
    cfg.workers = 1;
    cfg.samples_per_batch = 1;
    cfg.max_steps = 5;
    cfg.seed = 66;
    further_train(net, ArchConfig{1, 8, 8, 8, 8, 16, 8, 1}, ExtractStrategy::HEAD_PREFIX, c, cfg);
    CHECK(bitwise_equal(before, net.params));
  }
}
