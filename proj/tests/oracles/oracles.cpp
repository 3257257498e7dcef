#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "spectral_gain/layers.hpp"

namespace oracle {

using spectral_gain::image_shape;
using spectral_gain::LayerKind;
using spectral_gain::Padding;

namespace {

std::size_t out_extent(std::size_t in, std::size_t lo, std::size_t hi, std::size_t k,
                       std::size_t stride) {
  return (in + lo + hi - k) / stride + 1;
}

}  // namespace

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

std::vector<std::complex<double>> naive_dft2d(const Tensor& plane, std::size_t rows,
                                              std::size_t cols) {
  const std::size_t h = plane.shape().height();
  const std::size_t w = plane.shape().width();
  // Phases reduced exactly in integers, then looked up per axis.
  const auto roots = [](std::size_t n) {
    std::vector<std::complex<double>> e(n);
    for (std::size_t m = 0; m < n; ++m) {
      e[m] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
    }
    return e;
  };
  const std::vector<std::complex<double>> er = roots(rows), ec = roots(cols);
  std::vector<std::complex<double>> out(rows * cols);
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t l = 0; l < cols; ++l) {
      std::complex<double> sum = 0.0;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          sum += plane[r * w + c] * (er[(k * r) % rows] * ec[(l * c) % cols]);
        }
      }
      out[k * cols + l] = sum;
    }
  }
  return out;
}

Tensor naive_conv(const Tensor& x, const LayerSpec& spec) {
  const Shape& s = x.shape();
  const std::size_t H = s.height(), W = s.width(), C = s.channels(), N = s.batch();
  const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, K = spec.out_channels;
  const std::size_t OH = out_extent(H, spec.pad.top, spec.pad.bottom, KH, spec.stride);
  const std::size_t OW = out_extent(W, spec.pad.left, spec.pad.right, KW, spec.stride);
  Tensor y(image_shape(OH, OW, K, N));
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        for (std::size_t k = 0; k < K; ++k) {
          double sum = spec.bias.empty() ? 0.0 : spec.bias[k];
          for (std::size_t kh = 0; kh < KH; ++kh) {
            for (std::size_t kw = 0; kw < KW; ++kw) {
              const long ih = static_cast<long>(oh * spec.stride + kh) - static_cast<long>(spec.pad.top);
              const long iw = static_cast<long>(ow * spec.stride + kw) - static_cast<long>(spec.pad.left);
              if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
              for (std::size_t c = 0; c < C; ++c) {
                sum += spec.weights[((kh * KW + kw) * C + c) * K + k] *
                       x.at(static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), c, n);
              }
            }
          }
          y.at(oh, ow, k, n) = sum;
        }
      }
    }
  }
  return y;
}

Tensor naive_pool(const Tensor& x, const LayerSpec& spec, bool max) {
  const Shape& s = x.shape();
  const std::size_t H = s.height(), W = s.width(), C = s.channels(), N = s.batch();
  const std::size_t OH = out_extent(H, spec.pad.top, spec.pad.bottom, spec.kernel_h, spec.stride);
  const std::size_t OW = out_extent(W, spec.pad.left, spec.pad.right, spec.kernel_w, spec.stride);
  Tensor y(image_shape(OH, OW, C, N));
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          double sum = 0.0;
          std::size_t count = 0;
          for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
            for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
              const long ih = static_cast<long>(oh * spec.stride + kh) - static_cast<long>(spec.pad.top);
              const long iw = static_cast<long>(ow * spec.stride + kw) - static_cast<long>(spec.pad.left);
              if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
              const double v = x.at(static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), c, n);
              best = std::max(best, v);
              sum += v;
              ++count;
            }
          }
          y.at(oh, ow, c, n) = max ? best : sum / static_cast<double>(count);
        }
      }
    }
  }
  return y;
}

double projected_output(const Network& net, const Tensor& x, const Tensor& p) {
  Tensor a = x;
  for (const LayerSpec& layer : net.layers) a = spectral_gain::layer_forward(layer, a);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += p[i] * a[i];
  return sum;
}

Pattern activation_pattern(const Network& net, const Tensor& x, double tie_tolerance) {
  Pattern pattern;
  Tensor a = x;
  for (const LayerSpec& layer : net.layers) {
    if (layer.kind == LayerKind::relu) {
      for (double v : a.values()) pattern.choices.push_back(v > 0.0 ? 1 : 0);
    } else if (layer.kind == LayerKind::maxpool) {
      const Shape& s = a.shape();
      const std::size_t H = s.height(), W = s.width();
      const std::size_t OH = out_extent(H, layer.pad.top, layer.pad.bottom, layer.kernel_h, layer.stride);
      const std::size_t OW = out_extent(W, layer.pad.left, layer.pad.right, layer.kernel_w, layer.stride);
      for (std::size_t n = 0; n < s.batch(); ++n) {
        for (std::size_t c = 0; c < s.channels(); ++c) {
          for (std::size_t oh = 0; oh < OH; ++oh) {
            for (std::size_t ow = 0; ow < OW; ++ow) {
              double best = -std::numeric_limits<double>::infinity();
              double second = best;
              std::int64_t where = -1;
              for (std::size_t kh = 0; kh < layer.kernel_h; ++kh) {
                for (std::size_t kw = 0; kw < layer.kernel_w; ++kw) {
                  const long ih = static_cast<long>(oh * layer.stride + kh) - static_cast<long>(layer.pad.top);
                  const long iw = static_cast<long>(ow * layer.stride + kw) - static_cast<long>(layer.pad.left);
                  if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                  const double v = a.at(static_cast<std::size_t>(ih), static_cast<std::size_t>(iw), c, n);
                  if (v > best) {
                    second = best;
                    best = v;
                    where = ih * static_cast<long>(W) + iw;
                  } else if (v > second) {
                    second = v;
                  }
                }
              }
              pattern.choices.push_back(where);
              pattern.near_tie = pattern.near_tie || best - second < tie_tolerance;
            }
          }
        }
      }
    }
    a = spectral_gain::layer_forward(layer, a);
  }
  return pattern;
}

FiniteDifference finite_difference_input(const Network& net, const Tensor& x, const Tensor& p,
                                         double eps) {
  FiniteDifference fd;
  fd.derivative = Tensor(x.shape());
  fd.valid.assign(x.size(), true);
  const Pattern base = activation_pattern(net, x, 0.0);
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + eps;
    const double plus = projected_output(net, probe, p);
    const bool same_plus = activation_pattern(net, probe, 0.0).choices == base.choices;
    probe[k] = x[k] - eps;
    const double minus = projected_output(net, probe, p);
    const bool same_minus = activation_pattern(net, probe, 0.0).choices == base.choices;
    probe[k] = x[k];
    fd.derivative[k] = (plus - minus) / (2.0 * eps);
    fd.valid[k] = same_plus && same_minus;
  }
  return fd;
}

Tensor finite_difference_weights(const Network& net, std::size_t layer, const Tensor& x,
                                 const Tensor& p, double eps) {
  Network probe = net;
  Tensor& w = probe.layers[layer].weights;
  Tensor out(w.shape());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double saved = w[k];
    w[k] = saved + eps;
    const double plus = projected_output(probe, x, p);
    w[k] = saved - eps;
    const double minus = projected_output(probe, x, p);
    w[k] = saved;
    out[k] = (plus - minus) / (2.0 * eps);
  }
  return out;
}

double relative_error(double a, double b, double floor) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < floor) return 0.0;
  return std::abs(a - b) / scale;
}

namespace {

void fill_params(LayerSpec& layer, Rng& rng) {
  if (!layer.has_params()) return;
  const std::size_t fan_in = layer.kind == LayerKind::conv
                                 ? layer.kernel_h * layer.kernel_w * layer.in_channels
                                 : layer.in_channels;
  const std::size_t fan_out = layer.kind == LayerKind::conv
                                  ? layer.kernel_h * layer.kernel_w * layer.out_channels
                                  : layer.out_channels;
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  layer.weights = random_tensor(layer.weights.shape(), rng, -a, a);
  layer.bias = random_tensor(layer.bias.shape(), rng, -0.1, 0.1);
}

}  // namespace

Network random_network(Rng& rng, std::size_t variant) {
  std::uniform_int_distribution<std::size_t> size(6, 9);
  std::uniform_int_distribution<std::size_t> chans(1, 3);
  std::uniform_int_distribution<std::size_t> feats(2, 4);
  const std::size_t h = size(rng);
  const std::size_t w = size(rng);
  const std::size_t c = chans(rng);
  const std::size_t k1 = feats(rng);
  const std::size_t k2 = feats(rng);
  const std::size_t classes = feats(rng) + 1;

  spectral_gain::Architecture arch;
  arch.name = "random-" + std::to_string(variant);
  arch.input_shape = Shape{h, w, c};
  auto& L = arch.layers;
  switch (variant % 5) {
    case 0:
      L.push_back(LayerSpec::conv(3, 3, c, k1, 1, 1));
      L.push_back(LayerSpec::relu());
      L.push_back(LayerSpec::maxpool(2, 2));
      break;
    case 1:
      L.push_back(LayerSpec::conv(3, 3, c, k1, 2, 0));
      L.push_back(LayerSpec::avgpool(2, 1));
      L.push_back(LayerSpec::relu());
      break;
    case 2:
      L.push_back(LayerSpec::conv(2, 2, c, k1, 1, 0));
      L.push_back(LayerSpec::maxpool(3, 2, Padding::uniform(1)));
      L.push_back(LayerSpec::conv(2, 2, k1, k2, 1, 0));
      L.push_back(LayerSpec::relu());
      break;
    case 3:
      L.push_back(LayerSpec::avgpool(3, 2, Padding::uniform(1)));
      L.push_back(LayerSpec::conv(3, 3, c, k1, 1, 1));
      L.push_back(LayerSpec::relu());
      L.push_back(LayerSpec::conv(2, 2, k1, k2, 1, 0));
      break;
    default:
      L.push_back(LayerSpec::conv(3, 2, c, k1, 1, 0));
      L.push_back(LayerSpec::relu());
      L.push_back(LayerSpec::maxpool(2, 1));
      L.push_back(LayerSpec::avgpool(2, 2));
      break;
  }
  const std::size_t features =
      spectral_gain::make_network(arch).num_classes;  // flattened size so far
  L.push_back(LayerSpec::fully_connected(features, classes));
  if (variant % 2 == 0) L.push_back(LayerSpec::softmax());
  for (LayerSpec& layer : L) fill_params(layer, rng);
  Network net = spectral_gain::make_network(std::move(arch));
  net.validate();
  return net;
}

std::vector<std::vector<double>> numeric_jacobian(const Network& net, const Tensor& x,
                                                  double eps) {
  Tensor y = x;
  for (const LayerSpec& layer : net.layers) y = spectral_gain::layer_forward(layer, y);
  std::vector<std::vector<double>> jac(y.size(), std::vector<double>(x.size()));
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + eps;
    Tensor plus = probe;
    for (const LayerSpec& layer : net.layers) plus = spectral_gain::layer_forward(layer, plus);
    probe[k] = x[k] - eps;
    Tensor minus = probe;
    for (const LayerSpec& layer : net.layers) minus = spectral_gain::layer_forward(layer, minus);
    probe[k] = x[k];
    for (std::size_t i = 0; i < y.size(); ++i) jac[i][k] = (plus[i] - minus[i]) / (2.0 * eps);
  }
  return jac;
}

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b.at(at)} << 24) | (std::uint32_t{b.at(at + 1)} << 16) |
         (std::uint32_t{b.at(at + 2)} << 8) | std::uint32_t{b.at(at + 3)};
}

}  // namespace

void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> out;
  put_be32(out, 2051);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  write_file_bytes(path, out);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 2049);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_file_bytes(path, out);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("oracle cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("oracle cannot write " + path.string());
}

ReferenceImage reference_idx_example(const std::filesystem::path& images,
                                     const std::filesystem::path& labels, std::size_t index) {
  const std::vector<std::uint8_t> ib = read_file_bytes(images);
  const std::vector<std::uint8_t> lb = read_file_bytes(labels);
  if (get_be32(ib, 0) != 2051 || get_be32(lb, 0) != 2049) {
    throw std::runtime_error("oracle: bad IDX magic");
  }
  const std::size_t rows = get_be32(ib, 8);
  const std::size_t cols = get_be32(ib, 12);
  ReferenceImage img;
  const std::size_t base = 16 + index * rows * cols;
  for (std::size_t i = 0; i < rows * cols; ++i) img.pixels.push_back(ib.at(base + i));
  img.label = lb.at(8 + index);
  return img;
}

ReferenceImage reference_cifar_example(const std::filesystem::path& batch, std::size_t index) {
  const std::vector<std::uint8_t> b = read_file_bytes(batch);
  const std::size_t base = index * 3073;
  ReferenceImage img;
  img.label = b.at(base);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 32; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        img.pixels.push_back(b.at(base + 1 + ch * 1024 + r * 32 + c));
      }
    }
  }
  return img;
}

std::vector<double> rise_then_flat(std::size_t rise, std::size_t flat, double slope,
                                   double noise_sigma, Rng& rng) {
  std::normal_distribution<double> noise(0.0, noise_sigma);
  std::vector<double> g;
  for (std::size_t t = 0; t < rise; ++t) g.push_back(-30.0 + slope * static_cast<double>(t));
  const double top = g.empty() ? -30.0 : g.back();
  for (std::size_t t = 0; t < flat; ++t) g.push_back(top + noise(rng));
  return g;
}

std::vector<double> flat_then_oscillating(std::size_t length, std::size_t change,
                                          double amplitude, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> g;
  for (std::size_t t = 0; t < length; ++t) {
    double v = -20.0 + noise(rng);
    if (t >= change) v += (t - change) % 2 == 0 ? amplitude : -amplitude;
    g.push_back(v);
  }
  return g;
}

std::vector<double> iid_noise(std::size_t length, double amplitude, Rng& rng) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  std::vector<double> g;
  for (std::size_t t = 0; t < length; ++t) g.push_back(-15.0 + u(rng));
  return g;
}

}  // namespace oracle
