#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "poseguide/errors.hpp"

namespace poseguide::nn {

// Dense row-major tensor of doubles, rank 0..4. All training math runs
// in 64-bit; persistence truncates to float32 at the checkpoint layer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, double fill);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessor, shape [N, C, H, W].
  double& at4(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  double at4(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  // 2-D accessor, shape [N, F].
  double& at2(int n, int f) { return data_[static_cast<std::size_t>(n) * shape_[1] + f]; }
  double at2(int n, int f) const { return data_[static_cast<std::size_t>(n) * shape_[1] + f]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  void fill(double v);
  double item() const;  // requires size() == 1

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace poseguide::nn
