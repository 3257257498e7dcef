#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace spectral_gain {

// Extents of a dense array. Image tensors use the axis order
// (height, width, channels, batch); missing trailing axes read as 1, so a
// rank-2 shape {h, w} is a single-channel single-example image.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  // Accepts signed extents so callers can surface negative sizes as errors.
  static Shape from_signed(std::span<const std::int64_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t element_count() const;

  std::size_t height() const { return axis_or_one(0); }
  std::size_t width() const { return axis_or_one(1); }
  std::size_t channels() const { return axis_or_one(2); }
  std::size_t batch() const { return axis_or_one(3); }

  bool operator==(const Shape& other) const = default;

  std::string to_string() const;

 private:
  std::size_t axis_or_one(std::size_t axis) const {
    return axis < dims_.size() ? dims_[axis] : 1;
  }

  std::vector<std::size_t> dims_;
};

Shape image_shape(std::size_t height, std::size_t width, std::size_t channels,
                  std::size_t batch = 1);

// Dense double-precision array in row-major order: the last axis (batch for
// images) is contiguous. A default-constructed tensor is empty and stands
// for "no value", e.g. the parameters of a relu layer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::size_t offset(std::size_t h, std::size_t w, std::size_t c = 0,
                     std::size_t n = 0) const {
    return ((h * shape_.width() + w) * shape_.channels() + c) *
               shape_.batch() + n;
  }
  double at(std::size_t h, std::size_t w, std::size_t c = 0,
            std::size_t n = 0) const {
    return values_[offset(h, w, c, n)];
  }
  double& at(std::size_t h, std::size_t w, std::size_t c = 0,
             std::size_t n = 0) {
    return values_[offset(h, w, c, n)];
  }

  // Same values under a new shape with equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

Tensor tensor_zeros(const Shape& shape);
Tensor tensor_scale(const Tensor& t, double factor);

struct ArgMax {
  std::size_t index;
  double value;
};

// Lowest index wins ties.
ArgMax argmax_flat(const Tensor& t);

// Reverses the height and width axes; channels and batch are untouched.
Tensor flip_spatial(const Tensor& t);

double inner_product(const Tensor& a, const Tensor& b);

// Largest |a - b| over all elements; shapes must match.
double max_abs_difference(const Tensor& a, const Tensor& b);

// Copies example `n` of an image batch into a batch-1 tensor.
Tensor extract_example(const Tensor& batch, std::size_t n);

}  // namespace spectral_gain
