#include "gansearch/tensor.hpp"

#include <cmath>
#include <sstream>

namespace gansearch {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
}

Tensor Tensor::full(std::vector<int> shape, float v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_to_string(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, float stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = stddev * rng.normal();
  return t;
}

float& Tensor::at(int n, int c, int h, int w) {
  return data_[static_cast<size_t>(((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

float Tensor::at(int n, int c, int h, int w) const {
  return data_[static_cast<size_t>(((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

float& Tensor::at(int r, int c) {
  return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)];
}

float Tensor::at(int r, int c) const {
  return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)];
}

float Tensor::scalar() const {
  if (numel() != 1) throw ShapeError("scalar() on tensor of shape " + shape_str());
  return data_[0];
}

void Tensor::fill(float v) {
  for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

MapMatF Tensor::mat(int rows, int cols) {
  if (static_cast<int64_t>(rows) * cols != numel())
    throw ShapeError("mat(" + std::to_string(rows) + "," + std::to_string(cols) +
                     ") view on tensor of shape " + shape_str());
  return MapMatF(data_.data(), rows, cols);
}

ConstMapMatF Tensor::mat(int rows, int cols) const {
  if (static_cast<int64_t>(rows) * cols != numel())
    throw ShapeError("mat(" + std::to_string(rows) + "," + std::to_string(cols) +
                     ") view on tensor of shape " + shape_str());
  return ConstMapMatF(data_.data(), rows, cols);
}

MapVecF Tensor::vec() { return MapVecF(data_.data(), static_cast<Eigen::Index>(numel())); }
ConstMapVecF Tensor::vec() const {
  return ConstMapVecF(data_.data(), static_cast<Eigen::Index>(numel()));
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace gansearch
