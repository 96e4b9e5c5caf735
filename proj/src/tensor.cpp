#include "uibd/tensor.hpp"

#include <cmath>
#include <sstream>

namespace uibd {

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    require(d >= 1, "tensor shape dims must be >= 1");
    n *= static_cast<size_t>(d);
  }
  require(!shape.empty(), "tensor shape must be non-empty");
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(shape_numel(shape_) == data_.size(),
          "tensor data length does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

double& Tensor::at(int c, int y, int x) {
  const int h = shape_[shape_.size() - 2];
  const int w = shape_[shape_.size() - 1];
  return data_[(static_cast<size_t>(c) * h + y) * w + x];
}

double Tensor::at(int c, int y, int x) const {
  const int h = shape_[shape_.size() - 2];
  const int w = shape_[shape_.size() - 1];
  return data_[(static_cast<size_t>(c) * h + y) * w + x];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::ensure_finite(const std::string& what) const {
  for (double x : data_) {
    if (!std::isfinite(x)) fail(what + ": non-finite value in tensor");
  }
}

Tensor& Tensor::operator+=(const Tensor& rhs) {
  require(same_shape(rhs), "tensor += shape mismatch");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& rhs) {
  require(same_shape(rhs), "tensor -= shape mismatch");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
Tensor operator*(Tensor lhs, double s) { return lhs *= s; }
Tensor operator*(double s, Tensor rhs) { return rhs *= s; }

Tensor axpy(const Tensor& a, double s, const Tensor& b) {
  require(a.same_shape(b), "axpy shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  const double* pb = b.data();
  double* po = out.data();
  for (size_t i = 0; i < out.size(); ++i) po[i] += s * pb[i];
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "dot shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_l2(const Tensor& t) { return std::sqrt(dot(t, t)); }

double norm_linf(const Tensor& t) {
  double m = 0.0;
  for (size_t i = 0; i < t.size(); ++i) m = std::max(m, std::fabs(t[i]));
  return m;
}

double norm_l1(const Tensor& t) {
  double s = 0.0;
  for (size_t i = 0; i < t.size(); ++i) s += std::fabs(t[i]);
  return s;
}

double mean(const Tensor& t) {
  double s = 0.0;
  for (size_t i = 0; i < t.size(); ++i) s += t[i];
  return s / static_cast<double>(t.size());
}

}  // namespace uibd
