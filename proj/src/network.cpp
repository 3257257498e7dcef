#include "spectral_gain/network.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "spectral_gain/error.hpp"

namespace spectral_gain {

namespace {

std::string layer_label(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" +
         std::string(to_string(spec.kind)) + ")";
}

Shape as_image(const Shape& s) {
  return image_shape(s.height(), s.width(), s.channels(), s.batch());
}

std::size_t chain_output_features(const std::vector<LayerSpec>& layers,
                                  const Shape& input_shape) {
  Shape shape = image_shape(input_shape.height(), input_shape.width(),
                            input_shape.channels(), 1);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      layers[i].validate();
      shape = output_shape(layers[i], shape);
    } catch (const ShapeError& e) {
      throw ShapeError(layer_label(i, layers[i]) + ": " + e.what());
    }
  }
  return shape.height() * shape.width() * shape.channels();
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Architecture named_architecture(std::string_view name) {
  Architecture arch;
  arch.name = std::string(name);
  if (name == "lenet-mnist") {
    arch.input_shape = Shape{28, 28, 1};
    arch.layers = {
        LayerSpec::conv(5, 5, 1, 20),     LayerSpec::maxpool(2, 2),
        LayerSpec::conv(5, 5, 20, 50),    LayerSpec::maxpool(2, 2),
        LayerSpec::conv(4, 4, 50, 500),   LayerSpec::relu(),
        LayerSpec::fully_connected(500, 10), LayerSpec::softmax(),
    };
    return arch;
  }
  if (name == "lenet-cifar") {
    // Pools pad one row/column at the bottom/right so that 32 -> 16 -> 8 ->
    // 4 and the last 4x4 conv sees a full window.
    const Padding tail{0, 1, 0, 1};
    arch.input_shape = Shape{32, 32, 3};
    arch.layers = {
        LayerSpec::conv(5, 5, 3, 32, 1, 2),  LayerSpec::maxpool(3, 2, tail),
        LayerSpec::relu(),
        LayerSpec::conv(5, 5, 32, 32, 1, 2), LayerSpec::relu(),
        LayerSpec::avgpool(3, 2, tail),
        LayerSpec::conv(5, 5, 32, 64, 1, 2), LayerSpec::relu(),
        LayerSpec::avgpool(3, 2, tail),
        LayerSpec::conv(4, 4, 64, 64),       LayerSpec::relu(),
        LayerSpec::fully_connected(64, 10),  LayerSpec::softmax(),
    };
    return arch;
  }
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (expected lenet-mnist or lenet-cifar)");
}

void Network::validate() const {
  if (input_shape.rank() == 0) throw ShapeError("network has no input shape");
  const std::size_t features = chain_output_features(layers, input_shape);
  if (features != num_classes) {
    throw ShapeError("network emits " + std::to_string(features) +
                     " outputs, expected " + std::to_string(num_classes));
  }
}

Network make_network(Architecture arch) {
  Network net;
  net.num_classes = chain_output_features(arch.layers, arch.input_shape);
  net.layers = std::move(arch.layers);
  net.input_shape = std::move(arch.input_shape);
  net.meta.architecture = std::move(arch.name);
  return net;
}

Tensor gaussian_filter(std::size_t size, double sigma) {
  if (size == 0 || sigma <= 0.0) {
    throw ShapeError("gaussian_filter needs size >= 1 and sigma > 0");
  }
  Tensor filter(Shape{size, size, 1, 1});
  const double center = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double dr = static_cast<double>(r) - center;
      const double dc = static_cast<double>(c) - center;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      filter.at(r, c) = v;
      total += v;
    }
  }
  for (double& v : filter.values()) v /= total;
  return filter;
}

Network make_toy_network(std::size_t height, std::size_t width) {
  Architecture arch;
  arch.name = "toy-gaussian";
  arch.input_shape = Shape{height, width, 1};
  LayerSpec conv = LayerSpec::conv(7, 7, 1, 1, 1, 3);
  conv.weights = gaussian_filter(7, 1.0);
  arch.layers = {std::move(conv), LayerSpec::relu()};
  return make_network(std::move(arch));
}

ForwardTrace forward(const Network& net, const Tensor& x) {
  const Shape& in = x.shape();
  if (in.height() != net.input_shape.height() ||
      in.width() != net.input_shape.width() ||
      in.channels() != net.input_shape.channels() || in.rank() > 4) {
    throw ShapeError("network input expects " + net.input_shape.to_string() +
                     " per example, got " + in.to_string());
  }
  ForwardTrace trace;
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.push_back(x.reshaped(as_image(in)));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    try {
      trace.activations.push_back(
          layer_forward(net.layers[i], trace.activations.back()));
    } catch (const ShapeError& e) {
      throw ShapeError(layer_label(i, net.layers[i]) + ": " + e.what());
    }
  }

  const Tensor& out = trace.output();
  const std::size_t batch = out.shape().batch();
  const std::size_t features = out.size() / batch;
  trace.predictions.resize(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < features; ++f) {
      if (out[f * batch + n] > out[best * batch + n]) best = f;
    }
    trace.predictions[n] = {best, out[best * batch + n]};
  }
  return trace;
}

BackwardTrace backward_projected(const Network& net, const ForwardTrace& trace,
                                 const Tensor& p,
                                 bool need_input_derivative) {
  if (trace.activations.size() != net.layers.size() + 1) {
    throw ShapeError("trace does not belong to this network");
  }
  if (p.shape().element_count() != trace.output().size() ||
      as_image(p.shape()) != trace.output().shape()) {
    throw ShapeError("projection shape " + p.shape().to_string() +
                     " does not match network output " +
                     trace.output().shape().to_string());
  }
  BackwardTrace result;
  result.params.resize(net.layers.size());
  Tensor projected = p.reshaped(trace.output().shape());
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const bool need_input = need_input_derivative || l > 0;
    try {
      BackwardResult step =
          layer_backward(net.layers[l], trace.activations[l],
                         trace.activations[l + 1], projected, need_input);
      result.params[l] = {std::move(step.param_derivative),
                          std::move(step.bias_derivative)};
      projected = std::move(step.input_derivative);
    } catch (const ShapeError& e) {
      throw ShapeError(layer_label(l, net.layers[l]) + ": " + e.what());
    }
  }
  if (need_input_derivative) result.input_derivative = std::move(projected);
  return result;
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Network init_weights(const Architecture& arch, std::uint64_t seed) {
  Network net = make_network(arch);
  net.meta.seed = seed;
  std::mt19937_64 rng(seed);
  for (LayerSpec& layer : net.layers) {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    if (layer.kind == LayerKind::conv) {
      const std::size_t area = layer.kernel_h * layer.kernel_w;
      fan_in = area * layer.in_channels;
      fan_out = area * layer.out_channels;
    } else if (layer.kind == LayerKind::fully_connected) {
      fan_in = layer.in_channels;
      fan_out = layer.out_channels;
    } else {
      continue;
    }
    const double bound = glorot_bound(fan_in, fan_out);
    for (double& w : layer.weights.values()) {
      w = bound * (2.0 * unit_uniform(rng) - 1.0);
    }
    for (double& b : layer.bias.values()) b = 0.0;
  }
  return net;
}

}  // namespace spectral_gain
