#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace fmtk {

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense n-dimensional array of doubles, row-major, with an optional
// gradient buffer of identical size. This is the currency of all numeric
// code in the toolkit.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Row-major offset of a multi-index; rank must match.
  int64_t offset(std::initializer_list<int> idx) const;
  double& at(std::initializer_list<int> idx) { return data_[static_cast<std::size_t>(offset(idx))]; }
  double at(std::initializer_list<int> idx) const { return data_[static_cast<std::size_t>(offset(idx))]; }

  bool has_grad() const { return !grad_.empty(); }
  // Allocates a zero gradient buffer if absent.
  void ensure_grad();
  void zero_grad();
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
  std::vector<double> grad_;  // empty means "no gradient buffer"
};

}  // namespace fmtk
