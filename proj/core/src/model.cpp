#include "atb/model.hpp"

#include <cmath>

#include "atb/error.hpp"
#include "atb/rng.hpp"

namespace atb {

namespace {
std::string layer_prefix(int i) { return "layer" + std::to_string(i) + "."; }

bool is_gain(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}

bool is_bias(const std::string& name) {
  if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) return true;
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return !leaf.empty() && leaf[0] == 'b';
}
}  // namespace

std::vector<std::pair<std::string, std::vector<std::size_t>>> model_param_shapes(
    const ArchConfig& arch, std::size_t vocab, std::size_t max_seq) {
  require_valid(arch);
  const auto dm = static_cast<std::size_t>(arch.d_m);
  const auto dq = static_cast<std::size_t>(arch.d_q);
  const auto dk = static_cast<std::size_t>(arch.d_k);
  const auto dv = static_cast<std::size_t>(arch.d_v);
  const auto df = static_cast<std::size_t>(arch.d_f);
  const auto dd = static_cast<std::size_t>(arch.d_o);

  std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes;
  shapes.emplace_back("tok_emb", std::vector<std::size_t>{vocab, dm});
  shapes.emplace_back("pos_emb", std::vector<std::size_t>{max_seq, dm});
  for (int i = 0; i < arch.l_t; ++i) {
    const std::string p = layer_prefix(i);
    shapes.emplace_back(p + "wq", std::vector<std::size_t>{dm, dq});
    shapes.emplace_back(p + "bq", std::vector<std::size_t>{dq});
    shapes.emplace_back(p + "wk", std::vector<std::size_t>{dm, dk});
    shapes.emplace_back(p + "bk", std::vector<std::size_t>{dk});
    shapes.emplace_back(p + "wv", std::vector<std::size_t>{dm, dv});
    shapes.emplace_back(p + "bv", std::vector<std::size_t>{dv});
    shapes.emplace_back(p + "wo", std::vector<std::size_t>{dv, dd});
    shapes.emplace_back(p + "bo", std::vector<std::size_t>{dd});
    shapes.emplace_back(p + "ln1.g", std::vector<std::size_t>{dm});
    shapes.emplace_back(p + "ln1.b", std::vector<std::size_t>{dm});
    shapes.emplace_back(p + "w1", std::vector<std::size_t>{dm, df});
    shapes.emplace_back(p + "b1", std::vector<std::size_t>{df});
    shapes.emplace_back(p + "w2", std::vector<std::size_t>{df, dm});
    shapes.emplace_back(p + "b2", std::vector<std::size_t>{dm});
    shapes.emplace_back(p + "ln2.g", std::vector<std::size_t>{dm});
    shapes.emplace_back(p + "ln2.b", std::vector<std::size_t>{dm});
  }
  return shapes;
}

ParamMap init_param_values(
    const std::vector<std::pair<std::string, std::vector<std::size_t>>>& shapes,
    std::uint64_t seed) {
  const Rng root(seed);
  ParamMap params;
  for (const auto& [name, shape] : shapes) {
    Tensor t((shape));
    if (is_gain(name)) {
      t.fill(1.0);
    } else if (is_bias(name)) {
      // zeros
    } else {
      Rng stream = root.split(name);
      for (double& v : t.data()) v = stream.trunc_normal(kInitStd);
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

Model init_model(const ArchConfig& arch, std::size_t vocab, std::size_t max_seq,
                 std::uint64_t seed) {
  Model m;
  m.arch = arch;
  m.vocab = vocab;
  m.max_seq = max_seq;
  m.params = init_param_values(model_param_shapes(arch, vocab, max_seq), seed);
  return m;
}

Value mha_block(Tape& tape, Value h_in, const ParamMap& params, const std::string& prefix,
                int heads, std::vector<Value>* attn_out) {
  const auto& wq_t = params.at(prefix + "wq");
  const auto dq = wq_t.cols();
  const auto dv = params.at(prefix + "wv").cols();
  if (heads < 1 || dq % heads != 0 || dv % heads != 0) {
    throw DimensionError("mha_block: head count " + std::to_string(heads) +
                         " incompatible with d_q=" + std::to_string(dq) +
                         ", d_v=" + std::to_string(dv));
  }
  const std::size_t hq = dq / heads;
  const std::size_t hv = dv / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hq));

  Value wq = tape.param(prefix + "wq", wq_t);
  Value bq = tape.param(prefix + "bq", params.at(prefix + "bq"));
  Value wk = tape.param(prefix + "wk", params.at(prefix + "wk"));
  Value bk = tape.param(prefix + "bk", params.at(prefix + "bk"));
  Value wv = tape.param(prefix + "wv", params.at(prefix + "wv"));
  Value bv = tape.param(prefix + "bv", params.at(prefix + "bv"));
  Value wo = tape.param(prefix + "wo", params.at(prefix + "wo"));
  Value bo = tape.param(prefix + "bo", params.at(prefix + "bo"));

  Value q = tape.add_rowvec(tape.matmul(h_in, wq), bq);
  Value k = tape.add_rowvec(tape.matmul(h_in, wk), bk);
  Value v = tape.add_rowvec(tape.matmul(h_in, wv), bv);

  Value head_sum{};
  bool first = true;
  for (int i = 0; i < heads; ++i) {
    Value qi = tape.slice_cols(q, i * hq, (i + 1) * hq);
    Value ki = tape.slice_cols(k, i * hq, (i + 1) * hq);
    Value vi = tape.slice_cols(v, i * hv, (i + 1) * hv);
    Value scores = tape.mul_scalar(tape.matmul_nt(qi, ki), scale);
    Value attn = tape.softmax_rows(scores);
    if (attn_out) attn_out->push_back(attn);
    Value ctx = tape.matmul(attn, vi);
    Value wo_i = tape.slice_rows(wo, i * hv, (i + 1) * hv);
    Value head_out = tape.matmul(ctx, wo_i);
    head_sum = first ? head_out : tape.add(head_sum, head_out);
    first = false;
  }
  Value mha = tape.add_rowvec(head_sum, bo);
  Value res = tape.add(h_in, mha);
  Value g = tape.param(prefix + "ln1.g", params.at(prefix + "ln1.g"));
  Value b = tape.param(prefix + "ln1.b", params.at(prefix + "ln1.b"));
  return tape.layer_norm(res, g, b, kLayerNormEps);
}

Value ffn_block(Tape& tape, Value h_in, const ParamMap& params, const std::string& prefix) {
  Value w1 = tape.param(prefix + "w1", params.at(prefix + "w1"));
  Value b1 = tape.param(prefix + "b1", params.at(prefix + "b1"));
  Value w2 = tape.param(prefix + "w2", params.at(prefix + "w2"));
  Value b2 = tape.param(prefix + "b2", params.at(prefix + "b2"));
  Value pre = tape.add_rowvec(tape.matmul(h_in, w1), b1);
  Value act = tape.relu(pre);
  Value out = tape.add_rowvec(tape.matmul(act, w2), b2);
  Value res = tape.add(h_in, out);
  Value g = tape.param(prefix + "ln2.g", params.at(prefix + "ln2.g"));
  Value b = tape.param(prefix + "ln2.b", params.at(prefix + "ln2.b"));
  return tape.layer_norm(res, g, b, kLayerNormEps);
}

TapedEncoderOut encoder_forward_taped(Tape& tape, const ParamMap& params,
                                      const ArchConfig& arch, std::size_t vocab,
                                      std::size_t max_seq, std::span<const int> ids,
                                      bool want_logits) {
  require_valid(arch);
  if (ids.empty()) throw ContractError("encoder_forward: empty input sequence");
  if (ids.size() > max_seq) {
    throw ContractError("encoder_forward: sequence length " + std::to_string(ids.size()) +
                        " exceeds max_seq " + std::to_string(max_seq));
  }
  std::vector<std::size_t> tok_ids(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("encoder_forward: token id " + std::to_string(ids[i]) +
                       " out of range [0, " + std::to_string(vocab) + ")");
    }
    tok_ids[i] = static_cast<std::size_t>(ids[i]);
  }
  std::vector<std::size_t> pos_ids(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) pos_ids[i] = i;

  // Register every tensor so backward() reports full-model gradients even for
  // tensors a particular input never touches.
  for (const auto& [name, t] : params) tape.param(name, t);

  Value tok = tape.param("tok_emb", params.at("tok_emb"));
  Value pos = tape.param("pos_emb", params.at("pos_emb"));
  Value x = tape.add(tape.gather_rows(tok, tok_ids), tape.gather_rows(pos, pos_ids));

  TapedEncoderOut out;
  out.attn.resize(arch.l_t);
  for (int layer = 0; layer < arch.l_t; ++layer) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    x = mha_block(tape, x, params, p, arch.h, &out.attn[layer]);
    x = ffn_block(tape, x, params, p);
  }
  out.hidden = x;
  if (want_logits) {
    out.logits = tape.matmul_nt(x, tok);
    out.has_logits = true;
  }
  return out;
}

EncoderOut encoder_forward(const ParamMap& params, const ArchConfig& arch, std::size_t vocab,
                           std::size_t max_seq, std::span<const int> ids, bool want_logits) {
  Tape tape;
  TapedEncoderOut t = encoder_forward_taped(tape, params, arch, vocab, max_seq, ids, want_logits);
  EncoderOut out;
  out.hidden = tape.value(t.hidden);
  out.attn.resize(t.attn.size());
  for (std::size_t l = 0; l < t.attn.size(); ++l) {
    for (Value a : t.attn[l]) out.attn[l].push_back(tape.value(a));
  }
  if (t.has_logits) out.logits = tape.value(t.logits);
  return out;
}

EncoderOut encoder_forward(const Model& model, std::span<const int> ids, bool want_logits) {
  return encoder_forward(model.params, model.arch, model.vocab, model.max_seq, ids, want_logits);
}

std::pair<Tensor, std::vector<Tensor>> mha_forward(const Tensor& h_in, const ParamMap& weights,
                                                   int heads) {
  Tape tape;
  std::vector<Value> attn_vals;
  Value h = tape.constant(h_in);
  Value out = mha_block(tape, h, weights, "", heads, &attn_vals);
  std::vector<Tensor> maps;
  maps.reserve(attn_vals.size());
  for (Value a : attn_vals) maps.push_back(tape.value(a));
  return {tape.value(out), std::move(maps)};
}

Tensor ffn_forward(const Tensor& h_mha, const ParamMap& weights) {
  Tape tape;
  Value h = tape.constant(h_mha);
  Value out = ffn_block(tape, h, weights, "");
  return tape.value(out);
}

}  // namespace atb
