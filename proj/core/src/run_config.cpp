#include "atb/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "atb/corpus.hpp"
#include "atb/error.hpp"

namespace atb {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError("config field " + field + ": " + why);
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) fail(where + "." + key, "unknown key");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& where, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(where + "." + key, "wrong type");
  }
}

std::vector<int> get_int_list(const json& obj, const std::string& where, const char* key,
                              std::vector<int> fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<std::vector<int>>();
  } catch (const json::exception&) {
    fail(where + "." + key, "expected a list of integers");
  }
}

TrainConfig parse_train(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"lr", "warmup_ratio", "batch_size", "epochs", "workers", "samples_per_batch",
              "seed", "objective", "optimizer", "mask_prob", "max_steps", "weight_decay",
              "grad_clip", "parallel"});
  TrainConfig t;
  t.lr = get_or(obj, where, "lr", t.lr);
  t.warmup_ratio = get_or(obj, where, "warmup_ratio", t.warmup_ratio);
  t.batch_size = get_or(obj, where, "batch_size", t.batch_size);
  t.epochs = get_or(obj, where, "epochs", t.epochs);
  t.workers = get_or(obj, where, "workers", t.workers);
  t.samples_per_batch = get_or(obj, where, "samples_per_batch", t.samples_per_batch);
  t.seed = get_or(obj, where, "seed", t.seed);
  t.objective = objective_from_name(get_or<std::string>(obj, where, "objective", "mlm"));
  const std::string opt = get_or<std::string>(obj, where, "optimizer", "adam");
  if (opt == "adam" || opt == "ADAM") {
    t.optimizer = OptimizerKind::ADAM;
  } else if (opt == "sgd" || opt == "SGD") {
    t.optimizer = OptimizerKind::SGD;
  } else {
    fail(where + ".optimizer", "expected \"adam\" or \"sgd\"");
  }
  t.mask_prob = get_or(obj, where, "mask_prob", t.mask_prob);
  t.max_steps = get_or(obj, where, "max_steps", t.max_steps);
  t.weight_decay = get_or(obj, where, "weight_decay", t.weight_decay);
  t.grad_clip = get_or(obj, where, "grad_clip", t.grad_clip);
  t.parallel = get_or(obj, where, "parallel", t.parallel);

  if (t.lr <= 0.0) fail(where + ".lr", "must be positive");
  if (t.warmup_ratio < 0.0 || t.warmup_ratio >= 1.0) fail(where + ".warmup_ratio", "must lie in [0, 1)");
  if (t.batch_size < 1) fail(where + ".batch_size", "must be >= 1");
  if (t.workers < 1) fail(where + ".workers", "must be >= 1");
  if (t.samples_per_batch < 1) fail(where + ".samples_per_batch", "must be >= 1");
  if (t.batch_size % t.workers != 0) {
    fail(where + ".batch_size",
         std::to_string(t.batch_size) + " not divisible by " + where + ".workers (" +
             std::to_string(t.workers) + ")");
  }
  if (!(t.mask_prob > 0.0) || !(t.mask_prob < 1.0)) fail(where + ".mask_prob", "must lie in (0, 1)");
  return t;
}

ArchConfig parse_arch_field(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) fail(where + "." + key, "missing");
  try {
    return parse_compact(obj.at(key).get<std::string>());
  } catch (const json::exception&) {
    fail(where + "." + key, "expected a compact architecture string");
  } catch (const ConfigError& e) {
    fail(where + "." + key, e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"schema_version", "corpus", "supernet", "train", "teacher", "search", "latency",
              "benchmark"});

  RunConfig cfg;
  cfg.schema_version = get_or(root, "config", "schema_version", 0);
  if (cfg.schema_version != 1) fail("config.schema_version", "expected 1");

  // corpus
  {
    const json obj = root.value("corpus", json::object());
    const std::string where = "corpus";
    check_keys(obj, where,
               {"kind", "path", "vocab", "seq_len", "num_sequences", "eval_sequences",
                "probe_sequences", "seed"});
    auto& c = cfg.corpus;
    c.kind = get_or<std::string>(obj, where, "kind", c.kind);
    c.path = get_or<std::string>(obj, where, "path", c.path);
    c.vocab = get_or(obj, where, "vocab", c.vocab);
    c.seq_len = get_or(obj, where, "seq_len", c.seq_len);
    c.num_sequences = get_or(obj, where, "num_sequences", c.num_sequences);
    c.eval_sequences = get_or(obj, where, "eval_sequences", c.eval_sequences);
    c.probe_sequences = get_or(obj, where, "probe_sequences", c.probe_sequences);
    c.seed = get_or(obj, where, "seed", c.seed);
    if (c.kind != "synthetic" && c.kind != "text") fail("corpus.kind", "expected \"synthetic\" or \"text\"");
    if (c.kind == "text" && c.path.empty()) fail("corpus.path", "required for text corpora");
    if (c.vocab < 8) fail("corpus.vocab", "must be >= 8");
    if (c.seq_len < 3) fail("corpus.seq_len", "must be >= 3");
    if (c.kind == "synthetic" && c.num_sequences <= c.eval_sequences + c.probe_sequences) {
      fail("corpus.num_sequences", "must exceed eval_sequences + probe_sequences");
    }
  }

  // supernet
  {
    const json obj = root.value("supernet", json::object());
    const std::string where = "supernet";
    check_keys(obj, where, {"layers", "d_m", "d_qkv", "d_f", "heads", "max_seq", "seed"});
    auto& s = cfg.supernet;
    ArchConfig a;
    a.l_t = get_or(obj, where, "layers", 4);
    a.d_m = get_or(obj, where, "d_m", 32);
    a.d_q = a.d_k = a.d_v = get_or(obj, where, "d_qkv", 32);
    a.d_f = get_or(obj, where, "d_f", 128);
    a.d_o = a.d_m;
    a.h = get_or(obj, where, "heads", 4);
    s.arch = a;
    s.max_seq = get_or(obj, where, "max_seq", s.max_seq);
    s.seed = get_or(obj, where, "seed", s.seed);
    const auto violations = validate(a);
    if (!violations.empty()) {
      std::ostringstream os;
      for (const auto& v : violations) os << " [" << v << "]";
      fail("supernet", "invalid architecture:" + os.str());
    }
    if (s.max_seq < cfg.corpus.seq_len) fail("supernet.max_seq", "smaller than corpus.seq_len");
  }

  // train
  cfg.train = parse_train(root.value("train", json::object()), "train");

  // teacher
  if (root.contains("teacher")) {
    const json obj = root.at("teacher");
    const std::string where = "teacher";
    check_keys(obj, where, {"arch", "train"});
    cfg.teacher.present = true;
    cfg.teacher.arch = parse_arch_field(obj, where, "arch");
    require_valid(cfg.teacher.arch);
    cfg.teacher.train = parse_train(obj.value("train", json::object()), "teacher.train");
  }

  // search
  {
    const json obj = root.value("search", json::object());
    const std::string where = "search";
    check_keys(obj, where,
               {"mode", "layers", "d_m", "d_f", "heads", "d_qkv", "head_dim", "generations",
                "population", "p_m", "p_e", "p_c", "crossover", "field_mutation_rate", "top_k",
                "latency_budget_ms", "seed"});
    auto& s = cfg.search;
    s.space.mode = space_mode_from_name(get_or<std::string>(obj, where, "mode", "pretrain"));
    s.space.layers = get_int_list(obj, where, "layers", {1, 2, 3, 4});
    s.space.d_model = get_int_list(obj, where, "d_m", {8, 16, 24, 32});
    s.space.d_ffn = get_int_list(obj, where, "d_f", {16, 32, 64, 96, 128});
    s.space.heads = get_int_list(obj, where, "heads",
                                 s.space.mode == SpaceMode::KD ? std::vector<int>{4}
                                                               : std::vector<int>{1, 2, 3, 4});
    s.space.d_qkv = get_int_list(obj, where, "d_qkv",
                                 s.space.mode == SpaceMode::KD ? std::vector<int>{8, 16, 24, 32}
                                                               : std::vector<int>{});
    s.space.head_dim = get_or(obj, where, "head_dim", 8);
    try {
      s.space.check();
    } catch (const ConfigError& e) {
      fail("search", e.what());
    }
    s.evo.generations = get_or(obj, where, "generations", s.evo.generations);
    s.evo.population = get_or(obj, where, "population", s.evo.population);
    s.evo.p_m = get_or(obj, where, "p_m", s.evo.p_m);
    s.evo.p_e = get_or(obj, where, "p_e", s.evo.p_e);
    s.evo.p_c = get_or(obj, where, "p_c", s.evo.p_c);
    s.evo.crossover_enabled = get_or(obj, where, "crossover", s.evo.crossover_enabled);
    s.evo.field_mutation_rate = get_or(obj, where, "field_mutation_rate", s.evo.field_mutation_rate);
    s.evo.top_k = get_or(obj, where, "top_k", s.evo.top_k);
    s.evo.seed = get_or(obj, where, "seed", s.evo.seed);
    s.latency_budget_ms = get_or(obj, where, "latency_budget_ms", s.latency_budget_ms);
    const double p_total = s.evo.p_m + s.evo.p_e + (s.evo.crossover_enabled ? s.evo.p_c : 0.0);
    if (p_total > 1.0 + 1e-12) fail("search.p_m", "operator probabilities sum above 1");
    if (s.evo.population < 2) fail("search.population", "must be >= 2");
    if (s.evo.generations < 1) fail("search.generations", "must be >= 1");
    if (s.evo.top_k < 1 || s.evo.top_k > s.evo.population) {
      fail("search.top_k", "must lie in [1, population]");
    }
    if (!(s.latency_budget_ms > 0.0)) fail("search.latency_budget_ms", "must be positive");

    const ArchConfig upper = s.space.max_arch();
    if (!fits_within(upper, cfg.supernet.arch)) {
      fail("search", "space upper bound " + format_compact(upper) +
                         " does not fit the supernet " + format_compact(cfg.supernet.arch));
    }
    if (s.space.mode == SpaceMode::PRETRAIN) {
      if (s.space.head_dim != cfg.supernet.arch.d_q / cfg.supernet.arch.h) {
        fail("search.head_dim", "must equal the supernet per-head width (" +
                                    std::to_string(cfg.supernet.arch.d_q / cfg.supernet.arch.h) +
                                    ") so extracted heads stay whole");
      }
    } else if (s.space.heads[0] != cfg.supernet.arch.h) {
      fail("search.heads", "KD mode must fix h to the supernet head count (" +
                               std::to_string(cfg.supernet.arch.h) + ")");
    }
  }

  // latency
  {
    const json obj = root.value("latency", json::object());
    const std::string where = "latency";
    check_keys(obj, where,
               {"num_samples", "seq_len", "runs", "mode", "seed", "fit_epochs", "fit_batch",
                "fit_lr"});
    auto& l = cfg.latency;
    l.num_samples = get_or(obj, where, "num_samples", l.num_samples);
    l.seq_len = get_or(obj, where, "seq_len", l.seq_len);
    l.runs = get_or(obj, where, "runs", l.runs);
    l.mode = latency_mode_from_name(get_or<std::string>(obj, where, "mode", "analytic"));
    l.seed = get_or(obj, where, "seed", l.seed);
    l.fit.epochs = get_or(obj, where, "fit_epochs", l.fit.epochs);
    l.fit.batch_size = get_or(obj, where, "fit_batch", l.fit.batch_size);
    l.fit.lr = get_or(obj, where, "fit_lr", l.fit.lr);
    if (l.seq_len < 1) fail("latency.seq_len", "must be >= 1");
    if (l.mode == LatencyMode::MEASURED && l.runs < 3) fail("latency.runs", "must be >= 3");
  }

  // benchmark
  {
    const json obj = root.value("benchmark", json::object());
    const std::string where = "benchmark";
    check_keys(obj, where, {"archs", "standalone"});
    if (obj.contains("archs")) {
      for (const auto& item : obj.at("archs")) {
        ArchConfig a;
        try {
          a = parse_compact(item.get<std::string>());
        } catch (const std::exception& e) {
          fail("benchmark.archs", e.what());
        }
        require_valid(a);
        if (!fits_within(a, cfg.supernet.arch)) {
          fail("benchmark.archs", format_compact(a) + " does not fit the supernet");
        }
        cfg.benchmark.archs.push_back(a);
      }
    }
    cfg.benchmark.standalone = parse_train(obj.value("standalone", json::object()), "benchmark.standalone");
  }

  if (cfg.train.objective == Objective::KD || cfg.benchmark.standalone.objective == Objective::KD) {
    if (!cfg.teacher.present) fail("teacher", "required by the kd objective");
    if (cfg.teacher.arch.h != cfg.supernet.arch.h) {
      fail("teacher.arch", "teacher head count must equal the supernet's for attention distillation");
    }
  }

  cfg.normalized_json = root.dump();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file not found: " + path);
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not readable: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

SuperConfig super_config_of(const RunConfig& cfg) {
  SuperConfig sc;
  sc.arch = cfg.supernet.arch;
  sc.vocab = cfg.corpus.vocab;
  sc.max_seq = cfg.supernet.max_seq;
  return sc;
}

Corpus build_corpus(const CorpusSection& section) {
  if (section.kind == "text") {
    return load_text_corpus(section.path, section.vocab, section.seq_len);
  }
  return make_synthetic_corpus(section.vocab, section.seq_len, section.num_sequences,
                               section.seed);
}

CorpusSplits split_corpus(const Corpus& full, const CorpusSection& section) {
  const std::size_t n = full.seqs.size();
  std::size_t n_eval = std::min(section.eval_sequences, n / 4);
  std::size_t n_probe = std::min(section.probe_sequences, n / 4);
  if (n_eval == 0 || n_probe == 0 || n <= n_eval + n_probe) {
    throw ConfigError("corpus too small to carve eval and probe slices (have " +
                      std::to_string(n) + " sequences)");
  }
  CorpusSplits s;
  s.train = full.slice(0, n - n_eval - n_probe);
  s.eval = full.slice(n - n_eval - n_probe, n - n_probe);
  s.probe = full.slice(n - n_probe, n);
  return s;
}

}  // namespace atb
