#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "spectral_gain/tensor.hpp"

namespace spectral_gain {

enum class LayerKind { conv, relu, maxpool, avgpool, fully_connected, softmax };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

struct Padding {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  static Padding uniform(std::size_t p) { return {p, p, p, p}; }
  bool operator==(const Padding&) const = default;
};

// One sequential layer. `kernel_h`/`kernel_w` are the filter extent for conv
// and the window for pools; `in_channels`/`out_channels` are feature counts
// for the fully-connected layer. Conv weights are laid out
// (kernel_h, kernel_w, in_channels, out_channels); fully-connected weights
// are (in_features, out_features) with in_features enumerated in the input
// tensor's own (height, width, channel) order.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  Padding pad;
  Tensor weights;
  Tensor bias;

  static LayerSpec conv(std::size_t kernel_h, std::size_t kernel_w,
                        std::size_t in_channels, std::size_t out_channels,
                        std::size_t stride = 1, std::size_t pad = 0);
  static LayerSpec relu();
  static LayerSpec maxpool(std::size_t window, std::size_t stride,
                           Padding pad = {});
  static LayerSpec avgpool(std::size_t window, std::size_t stride,
                           Padding pad = {});
  static LayerSpec fully_connected(std::size_t in_features,
                                   std::size_t out_features);
  static LayerSpec softmax();

  bool has_params() const {
    return kind == LayerKind::conv || kind == LayerKind::fully_connected;
  }

  // Throws ShapeError on inconsistent hyperparameters or parameter shapes.
  void validate() const;

  bool operator==(const LayerSpec&) const = default;
};

// Output extents for a 4-D input; throws ShapeError naming the problem.
Shape output_shape(const LayerSpec& spec, const Shape& input);

// Derivatives of <p_out, f(x)>. Parameter derivatives are empty tensors for
// layers without parameters.
struct BackwardResult {
  Tensor input_derivative;
  Tensor param_derivative;
  Tensor bias_derivative;
};

Tensor conv_forward(const Tensor& x, const LayerSpec& spec);
// With need_input = false the input derivative is left empty; training skips
// it for the first layer.
BackwardResult conv_backward(const Tensor& x, const Tensor& p_out,
                             const LayerSpec& spec, bool need_input = true);

Tensor relu_forward(const Tensor& x);
BackwardResult relu_backward(const Tensor& x, const Tensor& p_out);

Tensor maxpool_forward(const Tensor& x, const LayerSpec& spec);
BackwardResult maxpool_backward(const Tensor& x, const Tensor& p_out,
                                const LayerSpec& spec);

// Averages over the in-bounds part of each window.
Tensor avgpool_forward(const Tensor& x, const LayerSpec& spec);
BackwardResult avgpool_backward(const Shape& input_shape, const Tensor& p_out,
                                const LayerSpec& spec);

Tensor fc_forward(const Tensor& x, const LayerSpec& spec);
BackwardResult fc_backward(const Tensor& x, const Tensor& p_out,
                           const LayerSpec& spec, bool need_input = true);

// Softmax over all non-batch elements of each example.
Tensor softmax_forward(const Tensor& logits);
BackwardResult softmax_backward(const Tensor& z, const Tensor& p_out);

inline constexpr double kLogLossFloor = 1e-15;

// Single example (batch extent 1).
double logloss_forward(const Tensor& z, std::size_t label);
Tensor logloss_backward(const Tensor& z, std::size_t label);

struct BatchLoss {
  double mean_loss = 0.0;
  std::size_t errors = 0;   // examples whose argmax differs from the label
  Tensor gradient;          // d(mean loss)/dz
};

// z holds softmax outputs for a batch; labels has one entry per example.
BatchLoss batch_logloss(const Tensor& z, std::span<const std::uint8_t> labels,
                        bool want_gradient = true);

// Kind dispatch used by the network.
Tensor layer_forward(const LayerSpec& spec, const Tensor& x);
BackwardResult layer_backward(const LayerSpec& spec, const Tensor& x,
                              const Tensor& y, const Tensor& p_out,
                              bool need_input = true);

}  // namespace spectral_gain
