#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spectral_gain/layers.hpp"
#include "spectral_gain/tensor.hpp"

namespace spectral_gain {

// Layer list without trained values; parameter tensors are zero-filled.
struct Architecture {
  std::string name;
  Shape input_shape;  // (height, width, channels)
  std::vector<LayerSpec> layers;
};

// "lenet-mnist" or "lenet-cifar"; throws ConfigError otherwise.
Architecture named_architecture(std::string_view name);

struct NetworkMetadata {
  std::string architecture;
  std::string dataset;
  std::uint64_t seed = 0;
  Tensor mean_image;  // empty when the network was not trained on a dataset

  bool operator==(const NetworkMetadata&) const = default;
};

struct Network {
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 0;  // output elements per example
  Shape input_shape;            // (height, width, channels)
  NetworkMetadata meta;

  // Checks every layer and that shapes chain from input_shape to
  // num_classes outputs. Throws ShapeError naming the failing layer.
  void validate() const;

  bool ends_with_softmax() const {
    return !layers.empty() && layers.back().kind == LayerKind::softmax;
  }

  bool operator==(const Network&) const = default;
};

// Wraps an architecture with the given parameters already in place.
Network make_network(Architecture arch);

// size x size filter sampled from exp(-(r^2 + c^2) / (2 sigma^2)) about the
// center and normalized to unit sum.
Tensor gaussian_filter(std::size_t size, double sigma);

// Single-channel conv (7x7, sigma 1, same padding, no bias) followed by relu.
Network make_toy_network(std::size_t height, std::size_t width);

struct Prediction {
  std::size_t class_index = 0;
  double score = 0.0;
};

struct ForwardTrace {
  std::vector<Tensor> activations;      // x_0 ... x_L
  std::vector<Prediction> predictions;  // one per example in the batch

  const Tensor& input() const { return activations.front(); }
  const Tensor& output() const { return activations.back(); }
  const Prediction& prediction(std::size_t example = 0) const {
    return predictions.at(example);
  }
};

struct ParamGradient {
  Tensor weights;
  Tensor bias;
};

struct BackwardTrace {
  Tensor input_derivative;             // dz/dx, shape of x_0
  std::vector<ParamGradient> params;   // one entry per layer
};

// x must be (height, width, channels, batch) matching the network input.
ForwardTrace forward(const Network& net, const Tensor& x);

// Threads p backwards through every layer. With need_input_derivative set
// to false, dz/dx is left empty and the first layer skips its data path.
BackwardTrace backward_projected(const Network& net, const ForwardTrace& trace,
                                 const Tensor& p,
                                 bool need_input_derivative = true);

// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

// Conv and fully-connected weights drawn from the Glorot range, biases
// zero. Deterministic in (arch, seed).
Network init_weights(const Architecture& arch, std::uint64_t seed);

// Versioned little-endian container; see docs/formats.md.
inline constexpr std::uint32_t kSnapshotVersion = 1;
void save_snapshot(const Network& net, const std::filesystem::path& path);
Network load_snapshot(const std::filesystem::path& path);

}  // namespace spectral_gain
