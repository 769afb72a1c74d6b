#include "fmtk/diffcore/tensor.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fmtk {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DataError(fmt::format("non-positive dimension in shape {}", shape_str(shape)));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream ss;
  ss << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) ss << ",";
    ss << shape[i];
  }
  ss << ")";
  return ss.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw DataError(fmt::format("shape {} does not match {} values", shape_str(shape_), data_.size()));
  }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = value;
  return t;
}

int64_t Tensor::offset(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw DataError(fmt::format("index rank {} vs tensor rank {}", idx.size(), rank()));
  }
  int64_t off = 0;
  int i = 0;
  for (int v : idx) {
    off = off * shape_[static_cast<std::size_t>(i)] + v;
    ++i;
  }
  return off;
}

void Tensor::ensure_grad() {
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad_.empty()) grad_.assign(data_.size(), 0.0);
}

std::vector<double>& Tensor::grad() {
  if (grad_.empty()) throw DataError("tensor has no gradient buffer");
  return grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (grad_.empty()) throw DataError("tensor has no gradient buffer");
  return grad_;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace fmtk
