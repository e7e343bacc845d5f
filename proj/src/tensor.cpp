#include "csnc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csnc/error.hpp"

namespace csnc {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " elements, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::from(std::span<const double> values) {
  return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(shape_));
  }
  return shape_[axis];
}

std::span<double> Tensor::slice(std::size_t i) {
  const std::size_t stride = shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> Tensor::slice(std::size_t i) const {
  const std::size_t stride = shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  return std::span<const double>(data_).subspan(i * stride, stride);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(std::string_view what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError("non-finite value " + std::to_string(data_[i]) + " at flat index " +
                         std::to_string(i) + " of " + std::string(what) + " " +
                         shape_string(shape_));
    }
  }
}

GradPair::GradPair(Tensor v, Tensor g) : value(std::move(v)), grad(std::move(g)) {
  if (value.shape() != grad.shape()) {
    throw ShapeError("gradient shape " + shape_string(grad.shape()) +
                     " differs from value shape " + shape_string(value.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin > end || end > t.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_string(t.shape()));
  }
  Shape shape = t.shape();
  const std::size_t stride = shape[0] == 0 ? 0 : t.size() / shape[0];
  shape[0] = end - begin;
  std::vector<double> data(t.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                           t.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(data));
}

void assign_rows(Tensor& dst, std::size_t begin, const Tensor& rows) {
  if (rows.rank() == 0 || dst.rank() == 0 || rows.rank() != dst.rank() ||
      begin + rows.dim(0) > dst.dim(0) ||
      (dst.dim(0) && rows.dim(0) && rows.size() / rows.dim(0) != dst.size() / dst.dim(0))) {
    throw ShapeError("assign_rows: cannot place " + shape_string(rows.shape()) + " into " +
                     shape_string(dst.shape()) + " at row " + std::to_string(begin));
  }
  if (rows.empty()) return;
  const std::size_t stride = rows.size() / rows.dim(0);
  std::copy(rows.data().begin(), rows.data().end(), dst.data().begin() + static_cast<std::ptrdiff_t>(begin * stride));
}

}  // namespace csnc
