#include "spectral_gain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "spectral_gain/error.hpp"

namespace spectral_gain {

namespace {

void check_extents(const std::vector<std::size_t>& dims) {
  for (std::size_t axis = 0; axis < dims.size(); ++axis) {
    if (dims[axis] == 0) {
      throw ShapeError("extent of axis " + std::to_string(axis) +
                       " must be >= 1");
    }
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + a.shape().to_string() +
                     " does not match " + b.shape().to_string());
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {
  check_extents(dims_);
}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  check_extents(dims_);
}

Shape Shape::from_signed(std::span<const std::int64_t> dims) {
  std::vector<std::size_t> extents;
  extents.reserve(dims.size());
  for (std::size_t axis = 0; axis < dims.size(); ++axis) {
    if (dims[axis] < 1) {
      throw ShapeError("extent of axis " + std::to_string(axis) +
                       " must be >= 1, got " + std::to_string(dims[axis]));
    }
    extents.push_back(static_cast<std::size_t>(dims[axis]));
  }
  return Shape(std::move(extents));
}

std::size_t Shape::element_count() const {
  if (dims_.empty()) return 0;
  std::size_t count = 1;
  for (std::size_t d : dims_) count *= d;
  return count;
}

std::string Shape::to_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) out << ',';
    out << dims_[i];
  }
  out << ']';
  return out.str();
}

Shape image_shape(std::size_t height, std::size_t width, std::size_t channels,
                  std::size_t batch) {
  return Shape{height, width, channels, batch};
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), values_(shape_.element_count(), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_.element_count()) {
    throw ShapeError("tensor of shape " + shape_.to_string() + " needs " +
                     std::to_string(shape_.element_count()) +
                     " values, got " + std::to_string(values_.size()));
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  return Tensor(*this).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape.element_count() != values_.size()) {
    throw ShapeError("cannot reshape " + shape_.to_string() + " to " +
                     shape.to_string());
  }
  return Tensor(std::move(shape), std::move(values_));
}

Tensor tensor_zeros(const Shape& shape) {
  if (shape.rank() == 0) throw ShapeError("tensor_zeros: empty shape");
  return Tensor(shape);
}

Tensor tensor_scale(const Tensor& t, double factor) {
  Tensor out = t;
  for (double& v : out.values()) v *= factor;
  return out;
}

ArgMax argmax_flat(const Tensor& t) {
  if (t.empty()) throw ShapeError("argmax_flat: empty tensor");
  const auto values = t.values();
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return {best, values[best]};
}

Tensor flip_spatial(const Tensor& t) {
  if (t.empty()) return t;
  const Shape& s = t.shape();
  const std::size_t h = s.height();
  const std::size_t w = s.width();
  const std::size_t row = s.channels() * s.batch();
  Tensor out(s);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double* src = t.data() + (r * w + c) * row;
      double* dst = out.data() + ((h - 1 - r) * w + (w - 1 - c)) * row;
      std::copy(src, src + row, dst);
    }
  }
  return out;
}

double inner_product(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "inner_product");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_difference");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

Tensor extract_example(const Tensor& batch, std::size_t n) {
  const Shape& s = batch.shape();
  if (n >= s.batch()) throw ShapeError("extract_example: index out of range");
  const std::size_t features = s.height() * s.width() * s.channels();
  Tensor out(image_shape(s.height(), s.width(), s.channels(), 1));
  for (std::size_t f = 0; f < features; ++f) {
    out[f] = batch[f * s.batch() + n];
  }
  return out;
}

}  // namespace spectral_gain
