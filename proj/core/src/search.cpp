#include "atb/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "atb/error.hpp"

namespace atb {

const char* space_mode_name(SpaceMode m) {
  return m == SpaceMode::PRETRAIN ? "pretrain" : "kd";
}

SpaceMode space_mode_from_name(const std::string& name) {
  if (name == "pretrain" || name == "PRETRAIN") return SpaceMode::PRETRAIN;
  if (name == "kd" || name == "KD") return SpaceMode::KD;
  throw ConfigError("unknown search-space mode \"" + name + "\"");
}

namespace {
void check_domain(const std::vector<int>& d, const char* name) {
  if (d.empty()) throw ConfigError(std::string("search space: domain ") + name + " is empty");
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    if (d[i] >= d[i + 1]) {
      throw ConfigError(std::string("search space: domain ") + name +
                        " must be strictly ascending");
    }
  }
  if (d.front() < 1) {
    throw ConfigError(std::string("search space: domain ") + name + " has values < 1");
  }
}
}  // namespace

void SearchSpace::check() const {
  check_domain(layers, "layers");
  check_domain(d_model, "d_model");
  check_domain(d_ffn, "d_ffn");
  check_domain(heads, "heads");
  if (mode == SpaceMode::KD) {
    if (heads.size() != 1) {
      throw ConfigError("search space: KD mode fixes the head count (expected one value)");
    }
    check_domain(d_qkv, "d_qkv");
    for (int v : d_qkv) {
      if (v % heads[0] != 0) {
        throw ConfigError("search space: d_qkv value " + std::to_string(v) +
                          " not divisible by h=" + std::to_string(heads[0]));
      }
    }
  } else {
    if (head_dim < 1) throw ConfigError("search space: head_dim must be >= 1");
  }
}

ArchConfig SearchSpace::make_arch(int l, int dm, int df, int h_or_dqkv) const {
  ArchConfig a;
  a.l_t = l;
  a.d_m = dm;
  a.d_o = dm;
  a.d_f = df;
  if (mode == SpaceMode::PRETRAIN) {
    a.h = h_or_dqkv;
    a.d_q = a.d_k = a.d_v = head_dim * a.h;
  } else {
    a.h = heads[0];
    a.d_q = a.d_k = a.d_v = h_or_dqkv;
  }
  return a;
}

ArchConfig SearchSpace::max_arch() const {
  const int last = mode == SpaceMode::PRETRAIN ? heads.back() : d_qkv.back();
  return make_arch(layers.back(), d_model.back(), d_ffn.back(), last);
}

bool SearchSpace::contains(const ArchConfig& a) const {
  auto has = [](const std::vector<int>& d, int v) {
    return std::binary_search(d.begin(), d.end(), v);
  };
  if (!has(layers, a.l_t) || !has(d_model, a.d_m) || !has(d_ffn, a.d_f)) return false;
  if (a.d_o != a.d_m || a.d_k != a.d_q || a.d_v != a.d_q) return false;
  if (mode == SpaceMode::PRETRAIN) {
    return has(heads, a.h) && a.d_q == head_dim * a.h;
  }
  return a.h == heads[0] && has(d_qkv, a.d_q);
}

namespace {
std::vector<int> range_step(int lo, int hi, int step) {
  std::vector<int> v;
  for (int x = lo; x <= hi; x += step) v.push_back(x);
  return v;
}
}  // namespace

SearchSpace paper_pretrain_space() {
  SearchSpace s;
  s.mode = SpaceMode::PRETRAIN;
  s.layers = range_step(1, 8, 1);
  s.d_model = range_step(128, 768, 4);
  s.d_ffn = range_step(128, 3072, 4);
  s.heads = range_step(1, 12, 1);
  s.head_dim = 64;
  return s;
}

SearchSpace paper_kd_space() {
  SearchSpace s;
  s.mode = SpaceMode::KD;
  s.layers = range_step(1, 8, 1);
  s.d_model = range_step(128, 768, 4);
  s.d_ffn = range_step(128, 3072, 4);
  s.heads = {12};
  s.d_qkv = range_step(180, 768, 12);
  return s;
}

std::uint64_t space_cardinality(const SearchSpace& space) {
  space.check();
  const std::uint64_t last =
      space.mode == SpaceMode::PRETRAIN ? space.heads.size() : space.d_qkv.size();
  return static_cast<std::uint64_t>(space.layers.size()) * space.d_model.size() *
         space.d_ffn.size() * last;
}

std::vector<ArchConfig> enumerate_space(const SearchSpace& space, std::uint64_t limit) {
  const std::uint64_t n = space_cardinality(space);
  if (n > limit) {
    throw ContractError("enumerate_space: " + std::to_string(n) + " points exceeds limit " +
                        std::to_string(limit));
  }
  const std::vector<int>& last_dom =
      space.mode == SpaceMode::PRETRAIN ? space.heads : space.d_qkv;
  std::vector<ArchConfig> all;
  all.reserve(n);
  for (int l : space.layers) {
    for (int dm : space.d_model) {
      for (int df : space.d_ffn) {
        for (int x : last_dom) {
          ArchConfig a = space.make_arch(l, dm, df, x);
          require_valid(a);
          all.push_back(a);
        }
      }
    }
  }
  return all;
}

ArchConfig sample_arch(const SearchSpace& space, Rng& rng) {
  const std::vector<int>& last_dom =
      space.mode == SpaceMode::PRETRAIN ? space.heads : space.d_qkv;
  const int l = space.layers[rng.uniform_int(space.layers.size())];
  const int dm = space.d_model[rng.uniform_int(space.d_model.size())];
  const int df = space.d_ffn[rng.uniform_int(space.d_ffn.size())];
  const int x = last_dom[rng.uniform_int(last_dom.size())];
  ArchConfig a = space.make_arch(l, dm, df, x);
  require_valid(a);
  return a;
}

ArchConfig mutate(const ArchConfig& arch, const SearchSpace& space, double field_rate,
                  Rng& rng) {
  if (!space.contains(arch)) {
    throw ContractError("mutate: architecture " + format_compact(arch) + " not in the space");
  }
  const std::vector<int>& last_dom =
      space.mode == SpaceMode::PRETRAIN ? space.heads : space.d_qkv;
  int l = arch.l_t;
  int dm = arch.d_m;
  int df = arch.d_f;
  int x = space.mode == SpaceMode::PRETRAIN ? arch.h : arch.d_q;
  if (rng.uniform() < field_rate) l = space.layers[rng.uniform_int(space.layers.size())];
  if (rng.uniform() < field_rate) dm = space.d_model[rng.uniform_int(space.d_model.size())];
  if (rng.uniform() < field_rate) df = space.d_ffn[rng.uniform_int(space.d_ffn.size())];
  if (rng.uniform() < field_rate) x = last_dom[rng.uniform_int(last_dom.size())];
  ArchConfig a = space.make_arch(l, dm, df, x);
  require_valid(a);
  return a;
}

ArchConfig crossover(const ArchConfig& a, const ArchConfig& b, const SearchSpace& space,
                     Rng& rng) {
  const int ax = space.mode == SpaceMode::PRETRAIN ? a.h : a.d_q;
  const int bx = space.mode == SpaceMode::PRETRAIN ? b.h : b.d_q;
  int fields_a[4] = {a.l_t, a.d_m, a.d_f, ax};
  const int fields_b[4] = {b.l_t, b.d_m, b.d_f, bx};
  const std::size_t point = 1 + rng.uniform_int(3);  // in {1, 2, 3}
  for (std::size_t i = point; i < 4; ++i) fields_a[i] = fields_b[i];
  ArchConfig c = space.make_arch(fields_a[0], fields_a[1], fields_a[2], fields_a[3]);
  require_valid(c);
  return c;
}

std::size_t roulette_select_index(std::span<const double> scores, Rng& rng) {
  if (scores.empty()) throw ContractError("roulette_select: empty population");
  double lo = scores[0], hi = scores[0];
  for (double s : scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const double eps_sel = 1e-6 * (hi - lo + 1e-12);
  double total = 0.0;
  for (double s : scores) total += s - lo + eps_sel;
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    cum += scores[i] - lo + eps_sel;
    if (u < cum) return i;
  }
  return scores.size() - 1;
}

ArchConfig roulette_select(std::span<const ArchConfig> population,
                           std::span<const double> scores, Rng& rng) {
  if (population.size() != scores.size()) {
    throw ContractError("roulette_select: population and score lengths differ");
  }
  return population[roulette_select_index(scores, rng)];
}

namespace {

struct BudgetTracker {
  double tightest = std::numeric_limits<double>::infinity();
  std::size_t consecutive_rejections = 0;

  void note(double predicted) { tightest = std::min(tightest, predicted); }
  void rejected(double budget) {
    if (++consecutive_rejections >= 1000) {
      std::ostringstream os;
      os << "latency budget " << budget << " infeasible after 1000 consecutive rejections; "
         << "tightest budget satisfied by any candidate seen: " << tightest;
      throw InfeasibleError(os.str(), tightest);
    }
  }
  void accepted() { consecutive_rejections = 0; }
};

}  // namespace

EvoResult evolve(const SearchSpace& space, const ArchScorer& evaluator,
                 const ArchScorer& predict_latency, double latency_budget,
                 const EvoParams& params) {
  space.check();
  if (params.population < 2) throw ContractError("evolve: population must be >= 2");
  if (params.top_k > params.population) {
    throw ContractError("evolve: top_k exceeds population size");
  }
  const double p_total = params.p_m + params.p_e + (params.crossover_enabled ? params.p_c : 0.0);
  if (p_total > 1.0 + 1e-12) {
    throw ContractError("evolve: operator probabilities exceed 1");
  }

  Rng rng(params.seed);
  BudgetTracker tracker;
  EvoResult result;

  std::vector<ArchConfig> prev_pop;
  std::vector<double> prev_scores;

  for (std::size_t gen = 1; gen <= params.generations; ++gen) {
    std::vector<ArchConfig> pop;
    std::vector<double> scores;
    while (pop.size() < params.population) {
      ArchConfig cand;
      if (gen == 1) {
        cand = sample_arch(space, rng);
      } else {
        const std::size_t pi = roulette_select_index(prev_scores, rng);
        cand = prev_pop[pi];
        const double u = rng.uniform();
        if (u < params.p_m) {
          cand = mutate(cand, space, params.field_mutation_rate, rng);
        } else if (u < params.p_m + params.p_e) {
          cand = sample_arch(space, rng);
        } else if (params.crossover_enabled && u < params.p_m + params.p_e + params.p_c) {
          const std::size_t pj = roulette_select_index(prev_scores, rng);
          cand = crossover(cand, prev_pop[pj], space, rng);
        }
        // else: keep the parent unchanged
      }
      const double lat = predict_latency(cand);
      tracker.note(lat);
      if (lat > latency_budget) {
        tracker.rejected(latency_budget);
        continue;
      }
      tracker.accepted();
      const double score = evaluator(cand);
      pop.push_back(cand);
      scores.push_back(score);
      result.history.push_back(Candidate{cand, lat, score, gen});
    }
    prev_pop = std::move(pop);
    prev_scores = std::move(scores);
  }

  std::vector<Candidate> ranked = result.history;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.predicted_latency != b.predicted_latency) {
      return a.predicted_latency < b.predicted_latency;
    }
    return a.arch < b.arch;
  });
  // Drop duplicate architectures so top_k names distinct candidates.
  std::vector<Candidate> winners;
  for (const Candidate& c : ranked) {
    bool seen = false;
    for (const Candidate& w : winners) {
      if (w.arch == c.arch) {
        seen = true;
        break;
      }
    }
    if (!seen) winners.push_back(c);
    if (winners.size() == params.top_k) break;
  }
  result.winners = std::move(winners);
  return result;
}

FastRuleCheck fast_rule_check(const ArchConfig& arch) {
  FastRuleCheck r;
  const long dm = arch.d_m, df = arch.d_f, dq = arch.d_q;
  r.df_ratio = static_cast<double>(df) / static_cast<double>(dm);
  r.dqkv_ratio = static_cast<double>(dq) / static_cast<double>(dm);
  // 1.6 dm <= df <= 1.9 dm and 0.7 dm <= dq <= 1.0 dm, inclusive, in exact
  // integer arithmetic.
  r.inside = 16 * dm <= 10 * df && 10 * df <= 19 * dm && 7 * dm <= 10 * dq && dq <= dm;
  return r;
}

namespace {
// Value of `dom` nearest to target; ties go to the smaller value.
int nearest_on_grid(const std::vector<int>& dom, double target) {
  int best = dom[0];
  double best_d = std::fabs(dom[0] - target);
  for (int v : dom) {
    const double d = std::fabs(v - target);
    if (d < best_d) {
      best = v;
      best_d = d;
    }
  }
  return best;
}
}  // namespace

std::vector<ArchConfig> fast_rule_candidates(const SearchSpace& space,
                                             const ArchScorer& predict_latency,
                                             double latency_budget) {
  space.check();
  std::vector<ArchConfig> out;
  for (int l : space.layers) {
    bool found = false;
    for (auto it = space.d_model.rbegin(); it != space.d_model.rend() && !found; ++it) {
      const int dm = *it;
      const int df = nearest_on_grid(space.d_ffn, 1.75 * dm);
      int x;
      if (space.mode == SpaceMode::PRETRAIN) {
        // Pick h so that head_dim * h lands nearest 0.85 * d_m.
        x = nearest_on_grid(space.heads, 0.85 * dm / space.head_dim);
      } else {
        x = nearest_on_grid(space.d_qkv, 0.85 * dm);
      }
      ArchConfig a = space.make_arch(l, dm, df, x);
      if (!fast_rule_check(a).inside) continue;
      if (predict_latency(a) > latency_budget) continue;
      out.push_back(a);
      found = true;
    }
  }
  return out;
}

}  // namespace atb
