#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace atb {

// Dense row-major tensor. Rank 1 and 2 cover everything in this project.
// Values are kept in double precision in memory; the checkpoint format
// serializes them as 32-bit floats.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::vector<double> v);  // shape [n]
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // 2-D accessors; rank-1 tensors behave as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  bool all_finite() const;

  void fill(double v);
  void add_in_place(const Tensor& o);        // this += o
  void add_scaled(const Tensor& o, double c);  // this += c * o
  void scale(double c);

  double max_abs() const;
  double max_abs_diff(const Tensor& o) const;
  // max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
  double max_rel_diff(const Tensor& o, double floor = 1e-12) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Named parameter (or gradient) collection. std::map keeps iteration order
// deterministic, which the reproducibility contract relies on.
using ParamMap = std::map<std::string, Tensor>;

void add_param_maps(ParamMap& dst, const ParamMap& src);  // dst += src
void scale_param_map(ParamMap& m, double c);
ParamMap zeros_like(const ParamMap& m);
std::size_t total_elements(const ParamMap& m);
double max_rel_diff(const ParamMap& a, const ParamMap& b, double floor = 1e-12);
bool bitwise_equal(const ParamMap& a, const ParamMap& b);

}  // namespace atb
