#include "atb/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "atb/error.hpp"
#include "atb/ops.hpp"

namespace atb {

namespace ops {

namespace {
void require_2d(const Tensor& t, const char* who) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(who) + ": expected rank-2 tensor, got " + t.shape_str());
  }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner dimension mismatch " + a.shape_str() + " * " + b.shape_str());
  }
  Tensor c({m, n});
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* cd = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ad[i * k + t];
      const double* brow = bd + t * n;
      double* crow = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt inner dimension mismatch " + a.shape_str() + " * " +
                         b.shape_str() + "^T");
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data().data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data().data() + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      c(i, j) = acc;
    }
  }
  return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("add shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor c = a;
  c.add_in_place(b);
  return c;
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_rowvec");
  if (bias.rank() != 1 || bias.size() != a.cols()) {
    throw DimensionError("add_rowvec bias shape " + bias.shape_str() + " vs matrix " +
                         a.shape_str());
  }
  Tensor c = a;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) += bias[j];
  }
  return c;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = a;
  out.scale(c);
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (!x.all_finite()) {
    throw NumericError("softmax_rows: non-finite input");
  }
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(x(i, j) - mx);
      y(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) y(i, j) *= inv;
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  Tensor* x_hat_out, std::vector<double>* inv_std_out) {
  require_2d(x, "layer_norm");
  const std::size_t m = x.rows(), d = x.cols();
  if (d < 2) {
    throw DimensionError("layer_norm requires feature dimension >= 2, got " + x.shape_str());
  }
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm gamma/beta shape mismatch for " + x.shape_str());
  }
  Tensor y({m, d});
  Tensor x_hat({m, d});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;  // biased: divide by d
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x(i, j) - mean) * is;
      x_hat(i, j) = xh;
      y(i, j) = xh * gamma[j] + beta[j];
    }
  }
  if (x_hat_out) *x_hat_out = std::move(x_hat);
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return y;
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  require_2d(a, "slice_rows");
  if (r0 > r1 || r1 > a.rows()) {
    throw DimensionError("slice_rows range out of bounds for " + a.shape_str());
  }
  Tensor out({r1 - r0, a.cols()});
  for (std::size_t i = r0; i < r1; ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i - r0, j) = a(i, j);
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  require_2d(a, "slice_cols");
  if (c0 > c1 || c1 > a.cols()) {
    throw DimensionError("slice_cols range out of bounds for " + a.shape_str());
  }
  Tensor out({a.rows(), c1 - c0});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> ids) {
  require_2d(a, "gather_rows");
  Tensor out({ids.size(), a.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= a.rows()) {
      throw IndexError("gather_rows: index " + std::to_string(ids[r]) + " out of range [0, " +
                       std::to_string(a.rows()) + ")");
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(r, j) = a(ids[r], j);
  }
  return out;
}

namespace {
double log_sum_exp_row(const Tensor& logits, std::size_t row) {
  const std::size_t n = logits.cols();
  double mx = logits(row, 0);
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits(row, j));
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += std::exp(logits(row, j) - mx);
  return mx + std::log(sum);
}
}  // namespace

double cross_entropy_sum(const Tensor& logits, std::span<const std::int64_t> targets,
                         std::size_t* count_out) {
  require_2d(logits, "cross_entropy");
  if (targets.size() != logits.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(logits.rows()) + " rows");
  }
  const auto vocab = static_cast<std::int64_t>(logits.cols());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const std::int64_t t = targets[r];
    if (t == kIgnoreTarget) continue;
    if (t < 0 || t >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range [0, " +
                       std::to_string(vocab) + ")");
    }
    sum += log_sum_exp_row(logits, r) - logits(r, static_cast<std::size_t>(t));
    ++count;
  }
  if (count_out) *count_out = count;
  return sum;
}

double cross_entropy_mean(const Tensor& logits, std::span<const std::int64_t> targets) {
  std::size_t count = 0;
  const double sum = cross_entropy_sum(logits, targets, &count);
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("mse shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

std::uint32_t Tape::push(Tensor v,
                         std::function<void(const Tape&, const Tensor&, std::vector<Tensor>&)> pull) {
  nodes_.push_back(Node{std::move(v), std::move(pull)});
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

void Tape::accumulate(std::vector<Tensor>& grads, std::uint32_t id,
                      const std::vector<std::size_t>& shape) {
  if (grads[id].size() == 0) grads[id] = Tensor::zeros(shape);
}

Value Tape::constant(Tensor v) { return Value{push(std::move(v), nullptr)}; }

Value Tape::param(const std::string& name, const Tensor& v) {
  auto it = params_.find(name);
  if (it != params_.end()) return Value{it->second};
  const std::uint32_t id = push(v, nullptr);
  params_.emplace(name, id);
  return Value{id};
}

Value Tape::matmul(Value a, Value b) {
  Tensor c = ops::matmul(value(a), value(b));
  const std::uint32_t ai = a.id, bi = b.id;
  return Value{push(std::move(c), [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& av = t.nodes_[ai].value;
    const Tensor& bv = t.nodes_[bi].value;
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    accumulate(grads, ai, av.shape());
    accumulate(grads, bi, bv.shape());
    Tensor& da = grads[ai];
    Tensor& db = grads[bi];
    // dA += g * B^T ; dB += A^T * g
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t2 = 0; t2 < k; ++t2) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g(i, j) * bv(t2, j);
        da(i, t2) += acc;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t2 = 0; t2 < k; ++t2) {
        const double av_it = av(i, t2);
        for (std::size_t j = 0; j < n; ++j) db(t2, j) += av_it * g(i, j);
      }
    }
  })};
}

Value Tape::matmul_nt(Value a, Value b) {
  Tensor c = ops::matmul_nt(value(a), value(b));
  const std::uint32_t ai = a.id, bi = b.id;
  return Value{push(std::move(c), [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& av = t.nodes_[ai].value;
    const Tensor& bv = t.nodes_[bi].value;
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    accumulate(grads, ai, av.shape());
    accumulate(grads, bi, bv.shape());
    Tensor& da = grads[ai];
    Tensor& db = grads[bi];
    // C = A * B^T: dA += g * B ; dB += g^T * A
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g(i, j);
        for (std::size_t t2 = 0; t2 < k; ++t2) da(i, t2) += gij * bv(j, t2);
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g(i, j);
        for (std::size_t t2 = 0; t2 < k; ++t2) db(j, t2) += gij * av(i, t2);
      }
    }
  })};
}

Value Tape::add(Value a, Value b) {
  Tensor c = ops::add(value(a), value(b));
  const std::uint32_t ai = a.id, bi = b.id;
  return Value{push(std::move(c), [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, ai, t.nodes_[ai].value.shape());
    accumulate(grads, bi, t.nodes_[bi].value.shape());
    grads[ai].add_in_place(g);
    grads[bi].add_in_place(g);
  })};
}

Value Tape::add_rowvec(Value a, Value bias) {
  Tensor c = ops::add_rowvec(value(a), value(bias));
  const std::uint32_t ai = a.id, bi = bias.id;
  return Value{push(std::move(c), [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, ai, t.nodes_[ai].value.shape());
    accumulate(grads, bi, t.nodes_[bi].value.shape());
    grads[ai].add_in_place(g);
    Tensor& db = grads[bi];
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) db[j] += g(i, j);
    }
  })};
}

Value Tape::mul_scalar(Value a, double c) {
  Tensor out = ops::mul_scalar(value(a), c);
  const std::uint32_t ai = a.id;
  return Value{push(std::move(out), [ai, c](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, ai, t.nodes_[ai].value.shape());
    grads[ai].add_scaled(g, c);
  })};
}

Value Tape::relu(Value a) {
  Tensor out = ops::relu(value(a));
  const std::uint32_t ai = a.id;
  return Value{push(std::move(out), [ai](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& av = t.nodes_[ai].value;
    accumulate(grads, ai, av.shape());
    Tensor& da = grads[ai];
    for (std::size_t i = 0; i < av.size(); ++i) {
      if (av[i] > 0.0) da[i] += g[i];
    }
  })};
}

Value Tape::softmax_rows(Value a) {
  Tensor y = ops::softmax_rows(value(a));
  const std::uint32_t ai = a.id;
  const std::uint32_t yi = push(std::move(y), nullptr);
  // Rewire: node yi needs its own value in the closure; use id capture.
  nodes_[yi].pull = [ai, yi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& yv = t.nodes_[yi].value;
    accumulate(grads, ai, t.nodes_[ai].value.shape());
    Tensor& da = grads[ai];
    for (std::size_t i = 0; i < yv.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < yv.cols(); ++j) dot += g(i, j) * yv(i, j);
      for (std::size_t j = 0; j < yv.cols(); ++j) da(i, j) += (g(i, j) - dot) * yv(i, j);
    }
  };
  return Value{yi};
}

Value Tape::layer_norm(Value x, Value gamma, Value beta, double eps) {
  Tensor x_hat;
  std::vector<double> inv_std;
  Tensor y = ops::layer_norm(value(x), value(gamma), value(beta), eps, &x_hat, &inv_std);
  const std::uint32_t xi = x.id, gi = gamma.id, bi = beta.id;
  auto xh = std::make_shared<Tensor>(std::move(x_hat));
  auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
  return Value{push(std::move(y), [xi, gi, bi, xh, is](const Tape& t, const Tensor& g,
                                                       std::vector<Tensor>& grads) {
    const Tensor& gv = t.nodes_[gi].value;
    const std::size_t m = g.rows(), d = g.cols();
    accumulate(grads, xi, t.nodes_[xi].value.shape());
    accumulate(grads, gi, gv.shape());
    accumulate(grads, bi, t.nodes_[bi].value.shape());
    Tensor& dx = grads[xi];
    Tensor& dgamma = grads[gi];
    Tensor& dbeta = grads[bi];
    for (std::size_t i = 0; i < m; ++i) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dxh = g(i, j) * gv[j];
        m1 += dxh;
        m2 += dxh * (*xh)(i, j);
      }
      m1 /= static_cast<double>(d);
      m2 /= static_cast<double>(d);
      const double s = (*is)[i];
      for (std::size_t j = 0; j < d; ++j) {
        const double dxh = g(i, j) * gv[j];
        dx(i, j) += s * (dxh - m1 - (*xh)(i, j) * m2);
        dgamma[j] += g(i, j) * (*xh)(i, j);
        dbeta[j] += g(i, j);
      }
    }
  })};
}

Value Tape::slice_rows(Value a, std::size_t r0, std::size_t r1) {
  Tensor out = ops::slice_rows(value(a), r0, r1);
  const std::uint32_t ai = a.id;
  return Value{push(std::move(out), [ai, r0](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, ai, t.nodes_[ai].value.shape());
    Tensor& da = grads[ai];
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) da(i + r0, j) += g(i, j);
    }
  })};
}

Value Tape::slice_cols(Value a, std::size_t c0, std::size_t c1) {
  Tensor out = ops::slice_cols(value(a), c0, c1);
  const std::uint32_t ai = a.id;
  return Value{push(std::move(out), [ai, c0](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
    accumulate(grads, ai, t.nodes_[ai].value.shape());
    Tensor& da = grads[ai];
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) da(i, j + c0) += g(i, j);
    }
  })};
}

Value Tape::gather_rows(Value a, std::vector<std::size_t> ids) {
  Tensor out = ops::gather_rows(value(a), ids);
  const std::uint32_t ai = a.id;
  auto ids_p = std::make_shared<std::vector<std::size_t>>(std::move(ids));
  return Value{push(std::move(out), [ai, ids_p](const Tape& t, const Tensor& g,
                                                std::vector<Tensor>& grads) {
    accumulate(grads, ai, t.nodes_[ai].value.shape());
    Tensor& da = grads[ai];
    for (std::size_t r = 0; r < ids_p->size(); ++r) {
      const std::size_t src = (*ids_p)[r];
      for (std::size_t j = 0; j < g.cols(); ++j) da(src, j) += g(r, j);
    }
  })};
}

Value Tape::cross_entropy_sum(Value logits, std::vector<std::int64_t> targets,
                              std::size_t* count_out) {
  std::size_t count = 0;
  const double sum = ops::cross_entropy_sum(value(logits), targets, &count);
  if (count_out) *count_out = count;
  const std::uint32_t li = logits.id;
  auto tg = std::make_shared<std::vector<std::int64_t>>(std::move(targets));
  return Value{push(Tensor::scalar(sum), [li, tg](const Tape& t, const Tensor& g,
                                                  std::vector<Tensor>& grads) {
    const Tensor& lv = t.nodes_[li].value;
    const double seed = g[0];
    accumulate(grads, li, lv.shape());
    Tensor& dl = grads[li];
    const Tensor probs = ops::softmax_rows(lv);
    for (std::size_t r = 0; r < lv.rows(); ++r) {
      const std::int64_t tr = (*tg)[r];
      if (tr == ops::kIgnoreTarget) continue;
      for (std::size_t j = 0; j < lv.cols(); ++j) {
        double p = probs(r, j);
        if (j == static_cast<std::size_t>(tr)) p -= 1.0;
        dl(r, j) += seed * p;
      }
    }
  })};
}

Value Tape::mse(Value a, Value b) {
  const double v = ops::mse(value(a), value(b));
  const std::uint32_t ai = a.id, bi = b.id;
  return Value{push(Tensor::scalar(v), [ai, bi](const Tape& t, const Tensor& g,
                                                std::vector<Tensor>& grads) {
    const Tensor& av = t.nodes_[ai].value;
    const Tensor& bv = t.nodes_[bi].value;
    const double seed = g[0];
    accumulate(grads, ai, av.shape());
    accumulate(grads, bi, bv.shape());
    Tensor& da = grads[ai];
    Tensor& db = grads[bi];
    const double c = 2.0 * seed / static_cast<double>(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = c * (av[i] - bv[i]);
      da[i] += d;
      db[i] -= d;
    }
  })};
}

ParamMap Tape::backward(Value loss, double seed_grad) const {
  if (loss.id >= nodes_.size()) {
    throw ContractError("backward: loss node out of range");
  }
  if (nodes_[loss.id].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        nodes_[loss.id].value.shape_str());
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id] = Tensor(nodes_[loss.id].value.shape(), {seed_grad});
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (grads[i].size() == 0) continue;  // node did not influence the loss
    if (nodes_[i].pull) nodes_[i].pull(*this, grads[i], grads);
  }
  ParamMap out;
  for (const auto& [name, id] : params_) {
    if (grads[id].size() != 0) {
      out.emplace(name, std::move(grads[id]));
    } else {
      out.emplace(name, Tensor::zeros(nodes_[id].value.shape()));
    }
  }
  return out;
}

}  // namespace atb
