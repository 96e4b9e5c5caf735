#ifndef UIBD_TENSOR_HPP_
#define UIBD_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uibd/common.hpp"

namespace uibd {

// Dense n-dimensional array of f64, row-major. The universal value carrier
// for images, noise, parameters and feature maps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // (c, y, x) accessors for CHW feature maps.
  double& at(int c, int y, int x);
  double at(int c, int y, int x) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  void fill(double v);
  // Throws if any element is NaN or Inf; `what` names the producing op.
  void ensure_finite(const std::string& what) const;

  // Elementwise in-place helpers.
  Tensor& operator+=(const Tensor& rhs);
  Tensor& operator-=(const Tensor& rhs);
  Tensor& operator*=(double s);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

size_t shape_numel(const std::vector<int>& shape);

Tensor operator+(Tensor lhs, const Tensor& rhs);
Tensor operator-(Tensor lhs, const Tensor& rhs);
Tensor operator*(Tensor lhs, double s);
Tensor operator*(double s, Tensor rhs);

// a + s*b, shape-checked.
Tensor axpy(const Tensor& a, double s, const Tensor& b);

double dot(const Tensor& a, const Tensor& b);
double norm_l2(const Tensor& t);
double norm_linf(const Tensor& t);
double norm_l1(const Tensor& t);
double mean(const Tensor& t);

}  // namespace uibd

#endif  // UIBD_TENSOR_HPP_
