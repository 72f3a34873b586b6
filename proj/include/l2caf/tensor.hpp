#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2caf {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major multi-dimensional array of 64-bit floats.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(checked_size(shape_)) != data_.size())
      throw ShapeError("tensor data length does not match shape " + shape_str());
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

  // (row, col, channel) accessor for rank-3 tensors laid out HWC.
  double& at3(int i, int j, int c) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + c)];
  }
  double at3(int i, int j, int c) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + c)];
  }

  double& at2(int i, int j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  double at2(int i, int j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double l2_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  double min() const;
  double max() const;
  bool all_finite() const;

  std::string shape_str() const;

 private:
  static int checked_size(const std::vector<int>& shape);

  std::vector<int> shape_;
  std::vector<double> data_;
};

/// Flat index of the largest element (first on ties).
int argmax(const Tensor& t);

/// Cosine similarity of two same-shape tensors viewed as flat vectors.
double cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace l2caf
