#include "dcnav/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dcnav {

namespace {
size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
  if (shape_.empty()) throw ShapeError("tensor: rank-0 shapes are not supported");
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("tensor: rank-0 shapes are not supported");
  if (data_.size() != shape_numel(shape_)) {
    std::ostringstream os;
    os << "tensor: data length " << data_.size() << " does not match shape "
       << shape_str();
    throw ShapeError(os.str());
  }
}

Tensor Tensor::full(std::vector<size_t> shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::vector(std::vector<double> v) {
  size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
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

void check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) {
    throw NumericError(std::string(where) + ": non-finite value in tensor " +
                       t.shape_str());
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

}  // namespace dcnav
