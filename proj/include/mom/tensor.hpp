#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mom {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles.
//
// Storage is shared between copies and copied on the first mutable access
// while shared, so a Tensor behaves as an immutable value once handed out.
class Tensor {
 public:
  // Rank-0 scalar holding 0.
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(double value) { return Tensor(Shape{}, value); }
  static Tensor of(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return storage_->size(); }

  std::span<const double> data() const noexcept { return *storage_; }
  std::span<double> mutable_data();

  double operator[](std::size_t i) const { return (*storage_)[i]; }
  double item() const;

  // Same storage, new shape; element count must match.
  Tensor reshaped(Shape shape) const;

  // Product of all dims but the last; the last dim.
  std::size_t rows() const;
  std::size_t cols() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> storage_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace mom
