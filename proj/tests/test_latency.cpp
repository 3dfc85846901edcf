#include <cmath>
#include <set>

#include <doctest.h>

#include "atb/error.hpp"
#include "atb/latency.hpp"
#include "atb/search.hpp"

using namespace atb;

namespace {
SearchSpace lat_space() {
  SearchSpace s;
  s.mode = SpaceMode::PRETRAIN;
  s.layers = {1, 2, 3, 4, 5, 6, 7, 8};
  s.d_model = {8, 12, 16, 20, 24, 28, 32, 36, 40, 44, 48};
  s.d_ffn = {8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 96};
  s.heads = {1, 2, 3, 4};
  s.head_dim = 8;
  return s;
}
}  // namespace

TEST_SUITE("analytic_latency") {
  TEST_CASE("strictly monotone in every counted dimension") {
    const ArchConfig base{2, 16, 16, 16, 16, 32, 16, 2};
    const double b = analytic_latency(base, 32);
    ArchConfig a = base;
    a.l_t += 1;
    CHECK(analytic_latency(a, 32) > b);
    a = base;
    a.d_m += 1;
    a.d_o = a.d_m;
    CHECK(analytic_latency(a, 32) > b);
    a = base;
    a.d_q += 2;
    a.d_k += 2;
    CHECK(analytic_latency(a, 32) > b);
    a = base;
    a.d_v += 2;
    CHECK(analytic_latency(a, 32) > b);
    a = base;
    a.d_f += 1;
    CHECK(analytic_latency(a, 32) > b);
  }

  TEST_CASE("equal counted dimensions give the equal proxy") {
    const ArchConfig a{2, 16, 16, 16, 16, 32, 16, 2};
    ArchConfig b = a;
    b.h = 4;  // head count does not enter the MAC count
    CHECK(analytic_latency(a, 32) == analytic_latency(b, 32));
  }

  TEST_CASE("proxy ratio of the conventional base to the S1 winner") {
    const ArchConfig bert_base{12, 768, 768, 768, 768, 3072, 768, 12};
    const ArchConfig s1 = parse_compact("5-564-1054-8-512");
    const double ratio = analytic_latency(bert_base, 128) / analytic_latency(s1, 128);
    // Compute-only proxy; the measured full-scale speedup was reported as
    // 7.2x on CPU, which this proxy should resemble in magnitude.
    CHECK(ratio > 5.0);
    CHECK(ratio < 12.0);
  }
}

TEST_SUITE("features") {
  TEST_CASE("normalization lands in the unit cube and inverts exactly on grid points") {
    const SearchSpace s = lat_space();
    Rng rng(71);
    for (int i = 0; i < 100; ++i) {
      const ArchConfig a = sample_arch(s, rng);
      const auto f = normalize_features(s, a);
      for (double v : f) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(features_to_arch(s, f) == a);
    }
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("seeded determinism and deduplication") {
    const SearchSpace s = lat_space();
    LatencyDataset a = build_latency_dataset(s, 150, 16, LatencyMode::ANALYTIC, 77);
    LatencyDataset b = build_latency_dataset(s, 150, 16, LatencyMode::ANALYTIC, 77);
    REQUIRE(a.samples.size() == b.samples.size());
    std::set<ArchConfig> seen;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      CHECK(a.samples[i].arch == b.samples[i].arch);
      CHECK(a.samples[i].latency_ms == b.samples[i].latency_ms);
      CHECK(seen.insert(a.samples[i].arch).second);  // no duplicates
      CHECK(a.samples[i].latency_ms > 0.0);
    }
  }

  TEST_CASE("small spaces are exhausted with a warning flag") {
    SearchSpace s;
    s.layers = {1, 2};
    s.d_model = {8, 16};
    s.d_ffn = {16, 32};
    s.heads = {1, 2};
    s.head_dim = 8;
    LatencyDataset ds = build_latency_dataset(s, 100, 16, LatencyMode::ANALYTIC, 3);
    CHECK(ds.exhausted_space);
    CHECK(ds.samples.size() == 16);
  }

  TEST_CASE("fewer than 100 requested samples is a contract error") {
    CHECK_THROWS_AS(build_latency_dataset(lat_space(), 99, 16, LatencyMode::ANALYTIC, 1),
                    ContractError);
  }
}

TEST_SUITE("predictor") {
  TEST_CASE("constant targets are fit exactly") {
    const SearchSpace s = lat_space();
    LatencyDataset ds = build_latency_dataset(s, 120, 16, LatencyMode::ANALYTIC, 11);
    for (auto& sample : ds.samples) sample.latency_ms = 3.5;
    LatencyModel m = fit_predictor(ds, 1);
    CHECK(m.constant_output);
    CHECK(m.held_out_mean_rel_err <= 1e-12);
    CHECK(predict(m, ds.samples[0].arch) == 3.5);
  }

  TEST_CASE("noise-free analytic data fits well even at modest sizes") {
    const SearchSpace s = lat_space();
    LatencyDataset ds = build_latency_dataset(s, 400, 16, LatencyMode::ANALYTIC, 13);
    FitOptions opt;
    opt.epochs = 200;
    LatencyModel m = fit_predictor(ds, 13, opt);
    // The acceptance gate checks <= 5% at n=2000; this smoke bound is looser.
    CHECK(m.held_out_mean_rel_err <= 0.15);
  }

  TEST_CASE("prediction is deterministic, finite, and floored") {
    const SearchSpace s = lat_space();
    LatencyDataset ds = build_latency_dataset(s, 150, 16, LatencyMode::ANALYTIC, 17);
    LatencyModel m = fit_predictor(ds, 17);
    Rng rng(19);
    for (int i = 0; i < 1000; ++i) {
      const ArchConfig a = sample_arch(s, rng);
      const double p1 = predict(m, a);
      const double p2 = predict(m, a);
      CHECK(p1 == p2);
      CHECK(std::isfinite(p1));
      CHECK(p1 >= m.floor_ms);
    }
  }

  TEST_CASE("held-out error shrinks (non-strictly) with dataset size at a fixed seed") {
    SearchSpace space;
    space.mode = SpaceMode::PRETRAIN;
    space.layers = {1, 2, 3, 4, 5, 6, 7, 8};
    space.d_model = {8, 12, 16, 20, 24, 28, 32, 36, 40, 44, 48, 52, 56, 60, 64};
    space.d_ffn = {8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 96, 104, 112, 120, 128};
    space.heads = {1, 2, 3, 4, 5, 6};
    space.head_dim = 8;
    double prev = 1e9;
    for (std::size_t n : {200u, 500u, 2000u}) {
      LatencyDataset ds = build_latency_dataset(space, n, 32, LatencyMode::ANALYTIC, 42);
      FitOptions opt;
      opt.epochs = 400;
      LatencyModel m = fit_predictor(ds, 42, opt);
      CHECK(m.held_out_mean_rel_err <= prev);
      prev = m.held_out_mean_rel_err;
    }
  }

  TEST_CASE("training samples predict within 2x on the analytic fit") {
    const SearchSpace s = lat_space();
    LatencyDataset ds = build_latency_dataset(s, 300, 16, LatencyMode::ANALYTIC, 23);
    FitOptions opt;
    opt.epochs = 200;
    LatencyModel m = fit_predictor(ds, 23, opt);
    for (std::size_t i = 0; i < 50; ++i) {
      const double p = predict(m, ds.samples[i].arch);
      CHECK(p <= 2.0 * ds.samples[i].latency_ms);
      CHECK(p >= 0.5 * ds.samples[i].latency_ms);
    }
  }
}

TEST_SUITE("measure") {
  TEST_CASE("fewer than 3 runs violates the precondition") {
    const ArchConfig a{1, 8, 8, 8, 8, 16, 8, 1};
    CHECK_THROWS_AS(measure_latency(a, 16, 1), ContractError);
    CHECK_THROWS_AS(measure_latency(a, 16, 2), ContractError);
  }
}
