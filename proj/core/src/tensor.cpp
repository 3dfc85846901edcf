#include "atb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "atb/error.hpp"

namespace atb {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::row(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> v) {
  return Tensor({r, c}, std::move(v));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_in_place(const Tensor& o) {
  if (!same_shape(o)) {
    throw DimensionError("add_in_place shape mismatch " + shape_str() + " vs " + o.shape_str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

void Tensor::add_scaled(const Tensor& o, double c) {
  if (!same_shape(o)) {
    throw DimensionError("add_scaled shape mismatch " + shape_str() + " vs " + o.shape_str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += c * o.data_[i];
}

void Tensor::scale(double c) {
  for (double& v : data_) v *= c;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

double Tensor::max_abs_diff(const Tensor& o) const {
  if (!same_shape(o)) {
    throw DimensionError("max_abs_diff shape mismatch " + shape_str() + " vs " + o.shape_str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    m = std::max(m, std::fabs(data_[i] - o.data_[i]));
  }
  return m;
}

double Tensor::max_rel_diff(const Tensor& o, double floor) const {
  if (!same_shape(o)) {
    throw DimensionError("max_rel_diff shape mismatch " + shape_str() + " vs " + o.shape_str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    double denom = std::max({std::fabs(data_[i]), std::fabs(o.data_[i]), floor});
    m = std::max(m, std::fabs(data_[i] - o.data_[i]) / denom);
  }
  return m;
}

void add_param_maps(ParamMap& dst, const ParamMap& src) {
  for (const auto& [name, g] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) {
      dst.emplace(name, g);
    } else {
      it->second.add_in_place(g);
    }
  }
}

void scale_param_map(ParamMap& m, double c) {
  for (auto& [name, t] : m) t.scale(c);
}

ParamMap zeros_like(const ParamMap& m) {
  ParamMap out;
  for (const auto& [name, t] : m) out.emplace(name, Tensor::zeros(t.shape()));
  return out;
}

std::size_t total_elements(const ParamMap& m) {
  std::size_t n = 0;
  for (const auto& [name, t] : m) n += t.size();
  return n;
}

double max_rel_diff(const ParamMap& a, const ParamMap& b, double floor) {
  if (a.size() != b.size()) {
    throw DimensionError("param map size mismatch");
  }
  double m = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) throw DimensionError("param map key mismatch: " + ia->first);
    m = std::max(m, ia->second.max_rel_diff(ib->second, floor));
  }
  return m;
}

bool bitwise_equal(const ParamMap& a, const ParamMap& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.shape() != ib->second.shape()) return false;
    const auto& da = ia->second.data();
    const auto& db = ib->second.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (da[i] != db[i]) return false;
    }
  }
  return true;
}

}  // namespace atb
