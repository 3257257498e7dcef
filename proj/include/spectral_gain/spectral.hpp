#pragma once

// Frequency response of a network linearized about one input: the data
// derivative dz/dx from a projected backward pass is tapered with a Hann
// window, Fourier transformed, and reported as a dB amplitude surface whose
// maximum is the Maximum Gain.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "spectral_gain/network.hpp"
#include "spectral_gain/tensor.hpp"

namespace spectral_gain {

enum class NormalizationMode {
  inverse_score,  // p_i = 1 / score
  score,          // p_i = score
};

enum class FftPadding {
  next_power_of_two,  // zero-pad each axis, radix-2 transform
  none,               // transform at the native size
};

struct ProbeConfig {
  double impulse_amplitude = 255.0;
  bool window = true;
  FftPadding padding = FftPadding::next_power_of_two;
  double amplitude_floor = 1e-12;
  NormalizationMode mode = NormalizationMode::inverse_score;

  void validate() const;
};

// Row-major complex 2-D array.
struct ComplexGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> values;

  std::complex<double> at(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }
};

struct SpectralResponse {
  Tensor derivative;    // (h, w) plane of dz/dx for one input channel
  Tensor windowed;      // derivative times hann2d, or a copy when disabled
  ComplexGrid spectrum;
  Tensor amplitude_db;  // (rows, cols) of the transform
  double max_gain_db = 0.0;
  std::size_t peak_row = 0;
  std::size_t peak_col = 0;
  std::size_t class_index = 0;
  double score = 0.0;
  std::size_t channel = 0;
};

// `amplitude` at (floor(h/2), floor(w/2)) of every channel, zero elsewhere.
Tensor impulse_image(std::size_t height, std::size_t width,
                     std::size_t channels, double amplitude);

// One-hot at the winning class of example 0; the score is floored at 1e-12
// before division.
Tensor make_projection(const ForwardTrace& trace, NormalizationMode mode);

// Separable symmetric Hann window; both extents must be >= 2.
Tensor hann2d(std::size_t height, std::size_t width);

std::size_t next_power_of_two(std::size_t n);

// In-place unnormalized forward DFT of a power-of-two length sequence.
void fft_radix2(std::span<std::complex<double>> data);

// Unnormalized 2-D forward DFT of the (height, width) plane of `x`.
ComplexGrid fft2d(const Tensor& x,
                  FftPadding padding = FftPadding::next_power_of_two);

// 20 log10(max(|X|, floor)) element-wise, as a (rows, cols) tensor.
Tensor amplitude_db(const ComplexGrid& spectrum, double floor);

// (height, width) plane for channel `c` of example 0.
Tensor channel_plane(const Tensor& t, std::size_t c);

// Window, transform and peak of one derivative plane.
SpectralResponse spectral_response(const Tensor& derivative_plane,
                                   const ProbeConfig& config);

// forward -> make_projection -> backward_projected -> per-channel response.
std::vector<SpectralResponse> probe(const Network& net, const Tensor& x,
                                    const ProbeConfig& config);

// Same pipeline with a caller-chosen projection tensor.
std::vector<SpectralResponse> probe_with_projection(const Network& net,
                                                    const Tensor& x,
                                                    const Tensor& projection,
                                                    const ProbeConfig& config);

// Arithmetic mean of max_gain_db over channels.
double mean_gain(std::span<const SpectralResponse> responses);

// Impulse image minus the network's stored mean image (if any).
Tensor preprocessed_impulse(const Network& net, const ProbeConfig& config);

// Channel-averaged Maximum Gain for the preprocessed impulse image.
double impulse_gain(const Network& net, const ProbeConfig& config);

}  // namespace spectral_gain
