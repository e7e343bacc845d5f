#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csnc {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles. Value semantic.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// Rank-1 tensor holding `values`.
  static Tensor from(std::initializer_list<double> values);
  static Tensor from(std::span<const double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Contiguous slice for leading index `i` (all trailing axes).
  std::span<double> slice(std::size_t i);
  std::span<const double> slice(std::size_t i) const;

  /// Same data, new extents. Throws ShapeError when the sizes differ.
  Tensor reshaped(Shape shape) const;

  void fill(double value);

  /// Throws NumericError naming `what` if any element is NaN or infinite.
  void require_finite(std::string_view what) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// A value together with its analytic gradient; the gradient has the value's shape.
struct GradPair {
  GradPair(Tensor value, Tensor grad);

  Tensor value;
  Tensor grad;
};

void require_rank(const Tensor& t, std::size_t rank, std::string_view what);

double max_abs_diff(const Tensor& a, const Tensor& b);

/// Rows [begin, end) along the leading axis.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);

/// Writes `rows` into `dst` starting at leading index `begin`.
void assign_rows(Tensor& dst, std::size_t begin, const Tensor& rows);

}  // namespace csnc
