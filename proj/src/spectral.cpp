#include "spectral_gain/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "spectral_gain/error.hpp"

namespace spectral_gain {

namespace {

constexpr double kScoreFloor = 1e-12;

bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

// Direct O(n^2) transform for lengths the radix-2 path cannot take.
void dft_direct(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * std::numbers::pi *
                           static_cast<double>((k * t) % n) /
                           static_cast<double>(n);
      sum += data[t] * std::polar(1.0, angle);
    }
    out[k] = sum;
  }
  std::copy(out.begin(), out.end(), data.begin());
}

void transform_1d(std::span<std::complex<double>> data) {
  if (is_power_of_two(data.size())) {
    fft_radix2(data);
  } else {
    dft_direct(data);
  }
}

double hann(std::size_t n, std::size_t length) {
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                               static_cast<double>(length - 1)));
}

}  // namespace

void ProbeConfig::validate() const {
  if (!(amplitude_floor > 0.0)) {
    throw ConfigError("amplitude floor must be > 0");
  }
}

Tensor impulse_image(std::size_t height, std::size_t width,
                     std::size_t channels, double amplitude) {
  Tensor img(image_shape(height, width, channels, 1));
  for (std::size_t c = 0; c < channels; ++c) {
    img.at(height / 2, width / 2, c) = amplitude;
  }
  return img;
}

Tensor make_projection(const ForwardTrace& trace, NormalizationMode mode) {
  const Prediction& pred = trace.prediction(0);
  const Tensor& out = trace.output();
  if (out.shape().batch() != 1) {
    throw ShapeError("make_projection expects a single-example trace");
  }
  const double score = std::max(pred.score, kScoreFloor);
  Tensor p(out.shape());
  p[pred.class_index] =
      mode == NormalizationMode::inverse_score ? 1.0 / score : score;
  return p;
}

Tensor hann2d(std::size_t height, std::size_t width) {
  if (height < 2 || width < 2) {
    throw ShapeError("hann2d needs both extents >= 2, got " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  Tensor w(Shape{height, width});
  for (std::size_t r = 0; r < height; ++r) {
    const double wr = hann(r, height);
    for (std::size_t c = 0; c < width; ++c) w.at(r, c) = wr * hann(c, width);
  }
  return w;
}

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_radix2(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw ShapeError("fft_radix2 needs a power-of-two length");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles are evaluated directly rather than by recurrence so that
      // rounding error does not grow with the transform length.
      const std::complex<double> w = std::polar(
          1.0, -2.0 * std::numbers::pi * static_cast<double>(k) /
                   static_cast<double>(len));
      for (std::size_t start = 0; start < n; start += len) {
        const std::complex<double> even = data[start + k];
        const std::complex<double> odd = data[start + k + half] * w;
        data[start + k] = even + odd;
        data[start + k + half] = even - odd;
      }
    }
  }
}

ComplexGrid fft2d(const Tensor& x, FftPadding padding) {
  if (x.empty()) throw ShapeError("fft2d: empty input");
  const std::size_t h = x.shape().height();
  const std::size_t w = x.shape().width();
  if (x.size() != h * w) throw ShapeError("fft2d expects a single 2-D plane");
  ComplexGrid grid;
  grid.rows = padding == FftPadding::next_power_of_two ? next_power_of_two(h) : h;
  grid.cols = padding == FftPadding::next_power_of_two ? next_power_of_two(w) : w;
  grid.values.assign(grid.rows * grid.cols, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) grid.values[r * grid.cols + c] = x[r * w + c];
  }
  for (std::size_t r = 0; r < grid.rows; ++r) {
    transform_1d({grid.values.data() + r * grid.cols, grid.cols});
  }
  std::vector<std::complex<double>> column(grid.rows);
  for (std::size_t c = 0; c < grid.cols; ++c) {
    for (std::size_t r = 0; r < grid.rows; ++r) column[r] = grid.values[r * grid.cols + c];
    transform_1d(column);
    for (std::size_t r = 0; r < grid.rows; ++r) grid.values[r * grid.cols + c] = column[r];
  }
  return grid;
}

Tensor amplitude_db(const ComplexGrid& spectrum, double floor) {
  if (!(floor > 0.0)) throw ConfigError("amplitude floor must be > 0");
  Tensor db(Shape{spectrum.rows, spectrum.cols});
  for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
    db[i] = 20.0 * std::log10(std::max(std::abs(spectrum.values[i]), floor));
  }
  return db;
}

Tensor channel_plane(const Tensor& t, std::size_t c) {
  const Shape& s = t.shape();
  if (c >= s.channels()) throw ShapeError("channel index out of range");
  Tensor plane(Shape{s.height(), s.width()});
  for (std::size_t r = 0; r < s.height(); ++r) {
    for (std::size_t col = 0; col < s.width(); ++col) {
      plane.at(r, col) = t.at(r, col, c, 0);
    }
  }
  return plane;
}

SpectralResponse spectral_response(const Tensor& derivative_plane,
                                   const ProbeConfig& config) {
  config.validate();
  SpectralResponse resp;
  resp.derivative = derivative_plane;
  resp.windowed = derivative_plane;
  if (config.window) {
    const Tensor taper = hann2d(derivative_plane.shape().height(),
                                derivative_plane.shape().width());
    for (std::size_t i = 0; i < taper.size(); ++i) resp.windowed[i] *= taper[i];
  }
  resp.spectrum = fft2d(resp.windowed, config.padding);
  resp.amplitude_db = amplitude_db(resp.spectrum, config.amplitude_floor);
  const ArgMax peak = argmax_flat(resp.amplitude_db);
  resp.max_gain_db = peak.value;
  resp.peak_row = peak.index / resp.spectrum.cols;
  resp.peak_col = peak.index % resp.spectrum.cols;
  return resp;
}

std::vector<SpectralResponse> probe_with_projection(const Network& net,
                                                    const Tensor& x,
                                                    const Tensor& projection,
                                                    const ProbeConfig& config) {
  if (x.shape().batch() != 1) throw ShapeError("probe expects a single example");
  const ForwardTrace trace = forward(net, x);
  const BackwardTrace back = backward_projected(net, trace, projection);
  std::vector<SpectralResponse> responses;
  const std::size_t channels = back.input_derivative.shape().channels();
  responses.reserve(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    SpectralResponse resp =
        spectral_response(channel_plane(back.input_derivative, c), config);
    resp.class_index = trace.prediction().class_index;
    resp.score = trace.prediction().score;
    resp.channel = c;
    responses.push_back(std::move(resp));
  }
  return responses;
}

std::vector<SpectralResponse> probe(const Network& net, const Tensor& x,
                                    const ProbeConfig& config) {
  const ForwardTrace trace = forward(net, x);
  return probe_with_projection(net, x, make_projection(trace, config.mode),
                               config);
}

double mean_gain(std::span<const SpectralResponse> responses) {
  if (responses.empty()) throw ShapeError("mean_gain: no responses");
  double total = 0.0;
  for (const SpectralResponse& r : responses) total += r.max_gain_db;
  return total / static_cast<double>(responses.size());
}

Tensor preprocessed_impulse(const Network& net, const ProbeConfig& config) {
  Tensor x = impulse_image(net.input_shape.height(), net.input_shape.width(),
                           net.input_shape.channels(), config.impulse_amplitude);
  const Tensor& mean = net.meta.mean_image;
  if (!mean.empty()) {
    if (mean.size() != x.size()) {
      throw ShapeError("stored mean image does not match the network input");
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= mean[i];
  }
  return x;
}

double impulse_gain(const Network& net, const ProbeConfig& config) {
  const std::vector<SpectralResponse> responses =
      probe(net, preprocessed_impulse(net, config), config);
  return mean_gain(responses);
}

}  // namespace spectral_gain
