#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dcnav/error.hpp"

namespace dcnav {

// Dense row-major tensor of 64-bit floats. Shapes are explicit; there is no
// broadcasting. All entries must stay finite; ops validate their outputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<size_t> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(size_t rows, size_t cols, std::vector<double> v);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t numel() const { return data_.size(); }
  size_t dim(size_t i) const { return shape_.at(i); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;
  bool defined() const { return !shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // Rank-2 accessors.
  double& at(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
  double at(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

  bool all_finite() const;

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// Raises NumericError if any entry of t is NaN/Inf.
void check_finite(const Tensor& t, const char* where);
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace dcnav
