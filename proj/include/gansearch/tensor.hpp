#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gansearch/errors.hpp"
#include "gansearch/rng.hpp"

namespace gansearch {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatF = Eigen::Map<MatF>;
using ConstMapMatF = Eigen::Map<const MatF>;
using MapVecF = Eigen::Map<Eigen::VectorXf>;
using ConstMapVecF = Eigen::Map<const Eigen::VectorXf>;

// Dense row-major float32 tensor. All network activations and parameters
// live in this type; Eigen maps give the math views.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float v);
  static Tensor from(std::vector<int> shape, std::vector<float> values);
  static Tensor randn(std::vector<int> shape, Rng& rng, float stddev = 1.0f);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Index helpers for the common ranks.
  float& at(int n, int c, int h, int w);
  float at(int n, int c, int h, int w) const;
  float& at(int r, int c);
  float at(int r, int c) const;

  // Scalar view of a 1-element tensor.
  float scalar() const;

  void fill(float v);
  bool all_finite() const;

  // Matrix view, total size must equal rows*cols.
  MapMatF mat(int rows, int cols);
  ConstMapMatF mat(int rows, int cols) const;
  MapVecF vec();
  ConstMapVecF vec() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Throws ShapeError with both shapes when they differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace gansearch
