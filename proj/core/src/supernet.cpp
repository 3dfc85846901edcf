#include "atb/supernet.hpp"

#include <algorithm>

#include "atb/error.hpp"
#include "atb/rng.hpp"

namespace atb {

SuperConfig desk_super_config() {
  SuperConfig c;
  c.arch = ArchConfig{4, 32, 32, 32, 32, 128, 32, 4};
  c.vocab = 64;
  c.max_seq = 32;
  return c;
}

SuperNet build_supernet(const SuperConfig& config, std::uint64_t seed) {
  require_valid(config.arch);
  if (config.vocab < 2 || config.max_seq < 1) {
    throw ValidationError("build_supernet: vocab and max_seq must be positive");
  }
  SuperNet net;
  net.config = config;
  net.params = init_param_values(model_param_shapes(config.arch, config.vocab, config.max_seq),
                                 seed);
  return net;
}

void add_kd_projection(SuperNet& net, std::size_t teacher_d_m, std::uint64_t seed) {
  if (net.params.count("kd_proj")) return;
  Tensor proj({static_cast<std::size_t>(net.config.arch.d_m), teacher_d_m});
  Rng stream = Rng(seed).split("kd_proj");
  for (double& v : proj.data()) v = stream.trunc_normal(kInitStd);
  net.params.emplace("kd_proj", std::move(proj));
}

const char* strategy_name(ExtractStrategy s) {
  return s == ExtractStrategy::HEAD_PREFIX ? "HEAD_PREFIX" : "PER_HEAD_SLICE";
}

ExtractStrategy strategy_from_name(const std::string& name) {
  if (name == "HEAD_PREFIX" || name == "head_prefix") return ExtractStrategy::HEAD_PREFIX;
  if (name == "PER_HEAD_SLICE" || name == "per_head_slice") return ExtractStrategy::PER_HEAD_SLICE;
  throw ConfigError("unknown extraction strategy \"" + name + "\"");
}

std::size_t AxisSpans::total() const {
  std::size_t n = 0;
  for (const auto& [b, e] : spans) n += e - b;
  return n;
}

std::size_t AxisSpans::map_index(std::size_t target) const {
  std::size_t off = target;
  for (const auto& [b, e] : spans) {
    const std::size_t len = e - b;
    if (off < len) return b + off;
    off -= len;
  }
  throw IndexError("AxisSpans::map_index: offset " + std::to_string(target) + " out of view");
}

bool AxisSpans::subset_of(const AxisSpans& outer) const {
  for (const auto& [b, e] : spans) {
    for (std::size_t i = b; i < e; ++i) {
      bool covered = false;
      for (const auto& [ob, oe] : outer.spans) {
        if (i >= ob && i < oe) {
          covered = true;
          break;
        }
      }
      if (!covered) return false;
    }
  }
  return true;
}

namespace {

AxisSpans prefix_span(std::size_t n) { return AxisSpans{{{0, n}}}; }

TensorSlice vec_slice(AxisSpans spans) {
  TensorSlice s;
  s.rows = std::move(spans);
  s.is_matrix = false;
  return s;
}

TensorSlice mat_slice(AxisSpans rows, AxisSpans cols) {
  TensorSlice s;
  s.rows = std::move(rows);
  s.cols = std::move(cols);
  s.is_matrix = true;
  return s;
}

}  // namespace

SubModelView extract_submodel(const SuperNet& net, const ArchConfig& arch,
                              ExtractStrategy strategy) {
  require_valid(arch);
  const ArchConfig& sup = net.config.arch;
  if (!fits_within(arch, sup)) {
    throw IndexError("extract_submodel: architecture " + format_compact(arch) +
                     " exceeds supernet " + format_compact(sup));
  }

  const std::size_t sup_hq = sup.d_q / sup.h;
  const std::size_t sup_hv = sup.d_v / sup.h;

  AxisSpans q_spans, v_spans;
  if (strategy == ExtractStrategy::PER_HEAD_SLICE) {
    if (arch.h != sup.h) {
      throw ContractError("PER_HEAD_SLICE requires the sub-model head count (" +
                          std::to_string(arch.h) + ") to equal the supernet's (" +
                          std::to_string(sup.h) + ")");
    }
    const std::size_t aq = arch.d_q / arch.h;
    const std::size_t av = arch.d_v / arch.h;
    for (int j = 0; j < sup.h; ++j) {
      q_spans.spans.emplace_back(j * sup_hq, j * sup_hq + aq);
      v_spans.spans.emplace_back(j * sup_hv, j * sup_hv + av);
    }
  } else {
    if (static_cast<std::size_t>(arch.d_q / arch.h) != sup_hq ||
        static_cast<std::size_t>(arch.d_v / arch.h) != sup_hv) {
      throw ContractError("HEAD_PREFIX requires the per-head widths to match the supernet (" +
                          std::to_string(sup_hq) + "/" + std::to_string(sup_hv) +
                          "), got " + std::to_string(arch.d_q / arch.h) + "/" +
                          std::to_string(arch.d_v / arch.h));
    }
    // Lowest-index heads, each kept whole: a contiguous prefix.
    q_spans.spans.emplace_back(0, static_cast<std::size_t>(arch.d_q));
    v_spans.spans.emplace_back(0, static_cast<std::size_t>(arch.d_v));
  }

  const auto dm = prefix_span(arch.d_m);
  const auto df = prefix_span(arch.d_f);

  SubModelView view;
  view.arch = arch;
  view.strategy = strategy;
  view.slices.emplace("tok_emb", mat_slice(prefix_span(net.config.vocab), dm));
  view.slices.emplace("pos_emb", mat_slice(prefix_span(net.config.max_seq), dm));
  for (int i = 0; i < arch.l_t; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    view.slices.emplace(p + "wq", mat_slice(dm, q_spans));
    view.slices.emplace(p + "bq", vec_slice(q_spans));
    view.slices.emplace(p + "wk", mat_slice(dm, q_spans));
    view.slices.emplace(p + "bk", vec_slice(q_spans));
    view.slices.emplace(p + "wv", mat_slice(dm, v_spans));
    view.slices.emplace(p + "bv", vec_slice(v_spans));
    view.slices.emplace(p + "wo", mat_slice(v_spans, dm));
    view.slices.emplace(p + "bo", vec_slice(dm));
    view.slices.emplace(p + "ln1.g", vec_slice(dm));
    view.slices.emplace(p + "ln1.b", vec_slice(dm));
    view.slices.emplace(p + "w1", mat_slice(dm, df));
    view.slices.emplace(p + "b1", vec_slice(df));
    view.slices.emplace(p + "w2", mat_slice(df, dm));
    view.slices.emplace(p + "b2", vec_slice(dm));
    view.slices.emplace(p + "ln2.g", vec_slice(dm));
    view.slices.emplace(p + "ln2.b", vec_slice(dm));
  }
  if (auto it = net.params.find("kd_proj"); it != net.params.end()) {
    view.slices.emplace("kd_proj", mat_slice(dm, prefix_span(it->second.cols())));
  }
  return view;
}

ParamMap gather(const SuperNet& net, const SubModelView& view) {
  ParamMap out;
  for (const auto& [name, slice] : view.slices) {
    const Tensor& src = net.params.at(name);
    if (slice.is_matrix) {
      Tensor dst({slice.rows.total(), slice.cols.total()});
      std::size_t r_out = 0;
      for (const auto& [rb, re] : slice.rows.spans) {
        for (std::size_t r = rb; r < re; ++r, ++r_out) {
          std::size_t c_out = 0;
          for (const auto& [cb, ce] : slice.cols.spans) {
            for (std::size_t c = cb; c < ce; ++c, ++c_out) dst(r_out, c_out) = src(r, c);
          }
        }
      }
      out.emplace(name, std::move(dst));
    } else {
      Tensor dst({slice.rows.total()});
      std::size_t i_out = 0;
      for (const auto& [b, e] : slice.rows.spans) {
        for (std::size_t i = b; i < e; ++i, ++i_out) dst[i_out] = src[i];
      }
      out.emplace(name, std::move(dst));
    }
  }
  return out;
}

Model materialize(const SuperNet& net, const SubModelView& view) {
  Model m;
  m.arch = view.arch;
  m.vocab = net.config.vocab;
  m.max_seq = net.config.max_seq;
  for (const auto& [name, shape] : model_param_shapes(view.arch, m.vocab, m.max_seq)) {
    const TensorSlice& slice = view.slices.at(name);
    const Tensor& src = net.params.at(name);
    Tensor dst((shape));
    if (slice.is_matrix) {
      for (std::size_t r = 0; r < dst.rows(); ++r) {
        const std::size_t sr = slice.rows.map_index(r);
        for (std::size_t c = 0; c < dst.cols(); ++c) {
          dst(r, c) = src(sr, slice.cols.map_index(c));
        }
      }
    } else {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[slice.rows.map_index(i)];
    }
    m.params.emplace(name, std::move(dst));
  }
  if (auto it = view.slices.find("kd_proj"); it != view.slices.end()) {
    const Tensor& src = net.params.at("kd_proj");
    Tensor dst({it->second.rows.total(), it->second.cols.total()});
    for (std::size_t r = 0; r < dst.rows(); ++r) {
      const std::size_t sr = it->second.rows.map_index(r);
      for (std::size_t c = 0; c < dst.cols(); ++c) {
        dst(r, c) = src(sr, it->second.cols.map_index(c));
      }
    }
    m.params.emplace("kd_proj", std::move(dst));
  }
  return m;
}

void scatter_gradients(const SubModelView& view, const ParamMap& sub_grads,
                       ParamMap& super_buffer) {
  for (const auto& [name, slice] : view.slices) {
    auto git = sub_grads.find(name);
    if (git == sub_grads.end()) {
      throw DimensionError("scatter_gradients: missing gradient for " + name);
    }
    const Tensor& g = git->second;
    Tensor& dst = super_buffer.at(name);
    if (slice.is_matrix) {
      if (g.rows() != slice.rows.total() || g.cols() != slice.cols.total()) {
        throw DimensionError("scatter_gradients: gradient shape " + g.shape_str() +
                             " does not match view for " + name);
      }
      std::size_t r_in = 0;
      for (const auto& [rb, re] : slice.rows.spans) {
        for (std::size_t r = rb; r < re; ++r, ++r_in) {
          std::size_t c_in = 0;
          for (const auto& [cb, ce] : slice.cols.spans) {
            for (std::size_t c = cb; c < ce; ++c, ++c_in) dst(r, c) += g(r_in, c_in);
          }
        }
      }
    } else {
      if (g.size() != slice.rows.total()) {
        throw DimensionError("scatter_gradients: gradient shape " + g.shape_str() +
                             " does not match view for " + name);
      }
      std::size_t i_in = 0;
      for (const auto& [b, e] : slice.rows.spans) {
        for (std::size_t i = b; i < e; ++i, ++i_in) dst[i] += g[i_in];
      }
    }
  }
}

}  // namespace atb
