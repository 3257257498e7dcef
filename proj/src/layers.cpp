#include "spectral_gain/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "spectral_gain/error.hpp"
#include "spectral_gain/kernels.hpp"

namespace spectral_gain {

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": expected shape " + a.to_string() +
                     ", got " + b.to_string());
  }
}

std::size_t pooled_extent(std::size_t in, std::size_t pad_lo,
                          std::size_t pad_hi, std::size_t window,
                          std::size_t stride, const char* axis) {
  const std::size_t padded = in + pad_lo + pad_hi;
  if (padded < window) {
    throw ShapeError(std::string("window of ") + std::to_string(window) +
                     " exceeds padded input " + axis + " of " +
                     std::to_string(padded));
  }
  return (padded - window) / stride + 1;
}

// In-bounds window rows/cols [lo, hi) for output index `o`.
struct Span1d {
  std::size_t lo;
  std::size_t hi;
};

Span1d window_span(std::size_t o, std::size_t stride, std::size_t pad_lo,
                   std::size_t window, std::size_t in) {
  const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * stride) -
                               static_cast<std::ptrdiff_t>(pad_lo);
  const std::ptrdiff_t end = start + static_cast<std::ptrdiff_t>(window);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(start, 0);
  const std::ptrdiff_t hi =
      std::min<std::ptrdiff_t>(end, static_cast<std::ptrdiff_t>(in));
  return {static_cast<std::size_t>(lo),
          static_cast<std::size_t>(std::max(lo, hi))};
}

void require_kind(const LayerSpec& spec, LayerKind kind) {
  if (spec.kind != kind) {
    throw ShapeError(std::string("expected a ") +
                     std::string(to_string(kind)) + " layer, got " +
                     std::string(to_string(spec.kind)));
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::fully_connected: return "fully-connected";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (LayerKind kind :
       {LayerKind::conv, LayerKind::relu, LayerKind::maxpool,
        LayerKind::avgpool, LayerKind::fully_connected, LayerKind::softmax}) {
    if (to_string(kind) == name) return kind;
  }
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv(std::size_t kernel_h, std::size_t kernel_w,
                          std::size_t in_channels, std::size_t out_channels,
                          std::size_t stride, std::size_t pad) {
  LayerSpec spec;
  spec.kind = LayerKind::conv;
  spec.kernel_h = kernel_h;
  spec.kernel_w = kernel_w;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.stride = stride;
  spec.pad = Padding::uniform(pad);
  spec.weights = Tensor(Shape{kernel_h, kernel_w, in_channels, out_channels});
  spec.bias = Tensor(Shape{out_channels});
  spec.validate();
  return spec;
}

LayerSpec LayerSpec::relu() {
  LayerSpec spec;
  spec.kind = LayerKind::relu;
  return spec;
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride,
                             Padding pad) {
  LayerSpec spec;
  spec.kind = LayerKind::maxpool;
  spec.kernel_h = spec.kernel_w = window;
  spec.stride = stride;
  spec.pad = pad;
  spec.validate();
  return spec;
}

LayerSpec LayerSpec::avgpool(std::size_t window, std::size_t stride,
                             Padding pad) {
  LayerSpec spec = maxpool(window, stride, pad);
  spec.kind = LayerKind::avgpool;
  return spec;
}

LayerSpec LayerSpec::fully_connected(std::size_t in_features,
                                     std::size_t out_features) {
  LayerSpec spec;
  spec.kind = LayerKind::fully_connected;
  spec.in_channels = in_features;
  spec.out_channels = out_features;
  spec.weights = Tensor(Shape{in_features, out_features});
  spec.bias = Tensor(Shape{out_features});
  spec.validate();
  return spec;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec spec;
  spec.kind = LayerKind::softmax;
  return spec;
}

void LayerSpec::validate() const {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  switch (kind) {
    case LayerKind::conv: {
      const Shape expected{kernel_h, kernel_w, in_channels, out_channels};
      require_same_shape(expected, weights.shape(), "conv filter");
      require_same_shape(Shape{out_channels}, bias.shape(), "conv bias");
      return;
    }
    case LayerKind::fully_connected:
      require_same_shape(Shape{in_channels, out_channels}, weights.shape(),
                         "fully-connected weights");
      require_same_shape(Shape{out_channels}, bias.shape(),
                         "fully-connected bias");
      return;
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      if (kernel_h < 1 || kernel_w < 1) throw ShapeError("empty pool window");
      if (pad.top >= kernel_h || pad.bottom >= kernel_h ||
          pad.left >= kernel_w || pad.right >= kernel_w) {
        throw ShapeError("pool padding must be smaller than the window");
      }
      [[fallthrough]];
    case LayerKind::relu:
    case LayerKind::softmax:
      if (!weights.empty() || !bias.empty()) {
        throw ShapeError(std::string(to_string(kind)) +
                         " layer must not carry parameters");
      }
      return;
  }
}

Shape output_shape(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::conv: {
      if (in.channels() != spec.in_channels) {
        throw ShapeError("conv expects " + std::to_string(spec.in_channels) +
                         " input channels, got " +
                         std::to_string(in.channels()));
      }
      const std::size_t oh = pooled_extent(in.height(), spec.pad.top,
                                           spec.pad.bottom, spec.kernel_h,
                                           spec.stride, "height");
      const std::size_t ow = pooled_extent(in.width(), spec.pad.left,
                                           spec.pad.right, spec.kernel_w,
                                           spec.stride, "width");
      return image_shape(oh, ow, spec.out_channels, in.batch());
    }
    case LayerKind::maxpool:
    case LayerKind::avgpool: {
      const std::size_t oh = pooled_extent(in.height(), spec.pad.top,
                                           spec.pad.bottom, spec.kernel_h,
                                           spec.stride, "height");
      const std::size_t ow = pooled_extent(in.width(), spec.pad.left,
                                           spec.pad.right, spec.kernel_w,
                                           spec.stride, "width");
      return image_shape(oh, ow, in.channels(), in.batch());
    }
    case LayerKind::fully_connected: {
      const std::size_t features = in.height() * in.width() * in.channels();
      if (features != spec.in_channels) {
        throw ShapeError("fully-connected expects " +
                         std::to_string(spec.in_channels) +
                         " input features, got " + std::to_string(features));
      }
      return image_shape(1, 1, spec.out_channels, in.batch());
    }
    case LayerKind::relu:
    case LayerKind::softmax:
      return in;
  }
  throw ShapeError("unknown layer kind");
}

// ---------------------------------------------------------------------------
// conv

Tensor conv_forward(const Tensor& x, const LayerSpec& spec) {
  require_kind(spec, LayerKind::conv);
  const Shape& in = x.shape();
  const Shape out_shape = output_shape(spec, in);
  const std::size_t H = in.height(), W = in.width(), C = in.channels(),
                    N = in.batch();
  const std::size_t OH = out_shape.height(), OW = out_shape.width(),
                    K = spec.out_channels;
  const auto& kern = kernels::active();

  Tensor out(out_shape);
  std::vector<kernels::ProductTerm> terms;
  terms.reserve(spec.kernel_h * spec.kernel_w * C);
  for (std::size_t oh = 0; oh < OH; ++oh) {
    const Span1d rows =
        window_span(oh, spec.stride, spec.pad.top, spec.kernel_h, H);
    for (std::size_t ow = 0; ow < OW; ++ow) {
      const Span1d cols =
          window_span(ow, spec.stride, spec.pad.left, spec.kernel_w, W);
      terms.clear();
      for (std::size_t ih = rows.lo; ih < rows.hi; ++ih) {
        const std::size_t kh = ih + spec.pad.top - oh * spec.stride;
        for (std::size_t iw = cols.lo; iw < cols.hi; ++iw) {
          const std::size_t kw = iw + spec.pad.left - ow * spec.stride;
          const double* w_tap =
              spec.weights.data() + (kh * spec.kernel_w + kw) * C * K;
          const double* x_pix = x.data() + (ih * W + iw) * C * N;
          for (std::size_t c = 0; c < C; ++c) {
            terms.push_back({w_tap + c * K, x_pix + c * N});
          }
        }
      }
      double* o = out.data() + (oh * OW + ow) * K * N;
      for (std::size_t k = 0; k < K; ++k) {
        std::fill(o + k * N, o + (k + 1) * N, spec.bias[k]);
      }
      kern.accumulate_products(terms, 1, o, K, N, N);
    }
  }
  return out;
}

BackwardResult conv_backward(const Tensor& x, const Tensor& p_out,
                             const LayerSpec& spec, bool need_input) {
  require_kind(spec, LayerKind::conv);
  const Shape& in = x.shape();
  const Shape out_shape = output_shape(spec, in);
  require_same_shape(out_shape, p_out.shape(), "conv_backward projection");
  const std::size_t H = in.height(), W = in.width(), C = in.channels(),
                    N = in.batch();
  const std::size_t OH = out_shape.height(), OW = out_shape.width(),
                    K = spec.out_channels;
  const std::size_t KH = spec.kernel_h, KW = spec.kernel_w, S = spec.stride;
  const auto& kern = kernels::active();

  BackwardResult result;

  if (need_input) {
    // Gather form: each input pixel collects every (tap, output channel)
    // that reads it.
    result.input_derivative = Tensor(in);
    std::vector<kernels::ProductTerm> terms;
    terms.reserve(KH * KW * K);
    for (std::size_t ih = 0; ih < H; ++ih) {
      for (std::size_t iw = 0; iw < W; ++iw) {
        terms.clear();
        for (std::size_t kh = 0; kh < KH; ++kh) {
          const std::ptrdiff_t num_h = static_cast<std::ptrdiff_t>(ih) +
                                       static_cast<std::ptrdiff_t>(spec.pad.top) -
                                       static_cast<std::ptrdiff_t>(kh);
          if (num_h < 0 || num_h % static_cast<std::ptrdiff_t>(S) != 0) continue;
          const std::size_t oh = static_cast<std::size_t>(num_h) / S;
          if (oh >= OH) continue;
          for (std::size_t kw = 0; kw < KW; ++kw) {
            const std::ptrdiff_t num_w =
                static_cast<std::ptrdiff_t>(iw) +
                static_cast<std::ptrdiff_t>(spec.pad.left) -
                static_cast<std::ptrdiff_t>(kw);
            if (num_w < 0 || num_w % static_cast<std::ptrdiff_t>(S) != 0) continue;
            const std::size_t ow = static_cast<std::size_t>(num_w) / S;
            if (ow >= OW) continue;
            const double* w_tap = spec.weights.data() + (kh * KW + kw) * C * K;
            const double* p_pix = p_out.data() + (oh * OW + ow) * K * N;
            for (std::size_t k = 0; k < K; ++k) {
              terms.push_back({w_tap + k, p_pix + k * N});
            }
          }
        }
        if (terms.empty()) continue;
        double* dx = result.input_derivative.data() + (ih * W + iw) * C * N;
        kern.accumulate_products(terms, K, dx, C, N, N);
      }
    }
  }

  // Filter rows (kw, c) of one kh are contiguous in both the weights and an
  // input row, so each output pixel contributes one dot term covering every
  // in-bounds kw at once. Output columns whose window is clipped by padding
  // share a kw range and are grouped by it.
  result.param_derivative = Tensor(spec.weights.shape());
  std::map<std::pair<std::size_t, std::size_t>, std::vector<kernels::DotTerm>> groups;
  for (std::size_t kh = 0; kh < KH; ++kh) {
    for (auto& [range, dots] : groups) dots.clear();
    for (std::size_t oh = 0; oh < OH; ++oh) {
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * S + kh) -
                                static_cast<std::ptrdiff_t>(spec.pad.top);
      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const Span1d cols = window_span(ow, S, spec.pad.left, KW, W);
        if (cols.lo >= cols.hi) continue;
        const std::size_t kw_lo = cols.lo + spec.pad.left - ow * S;
        groups[{kw_lo, kw_lo + (cols.hi - cols.lo)}].push_back(
            {x.data() + (static_cast<std::size_t>(ih) * W + cols.lo) * C * N,
             p_out.data() + (oh * OW + ow) * K * N});
      }
    }
    for (const auto& [range, dots] : groups) {
      if (dots.empty()) continue;
      double* dw = result.param_derivative.data() + (kh * KW + range.first) * C * K;
      kern.accumulate_dots(dots, N, N, N, dw, (range.second - range.first) * C, K, K);
    }
  }

  result.bias_derivative = Tensor(spec.bias.shape());
  for (std::size_t pix = 0; pix < OH * OW; ++pix) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* p = p_out.data() + (pix * K + k) * N;
      double sum = 0.0;
      for (std::size_t n = 0; n < N; ++n) sum += p[n];
      result.bias_derivative[k] += sum;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// relu

Tensor relu_forward(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

BackwardResult relu_backward(const Tensor& x, const Tensor& p_out) {
  require_same_shape(x.shape(), p_out.shape(), "relu_backward projection");
  BackwardResult result;
  result.input_derivative = Tensor(x.shape());
  double* dx = result.input_derivative.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] = x[i] > 0.0 ? p_out[i] : 0.0;
  }
  return result;
}

// ---------------------------------------------------------------------------
// pooling

Tensor maxpool_forward(const Tensor& x, const LayerSpec& spec) {
  require_kind(spec, LayerKind::maxpool);
  const Shape& in = x.shape();
  const Shape out_shape = output_shape(spec, in);
  const std::size_t H = in.height(), W = in.width();
  const std::size_t row = in.channels() * in.batch();
  Tensor out(out_shape);
  for (std::size_t oh = 0; oh < out_shape.height(); ++oh) {
    const Span1d rows =
        window_span(oh, spec.stride, spec.pad.top, spec.kernel_h, H);
    for (std::size_t ow = 0; ow < out_shape.width(); ++ow) {
      const Span1d cols =
          window_span(ow, spec.stride, spec.pad.left, spec.kernel_w, W);
      double* o = out.data() + (oh * out_shape.width() + ow) * row;
      std::fill(o, o + row, -std::numeric_limits<double>::infinity());
      for (std::size_t ih = rows.lo; ih < rows.hi; ++ih) {
        for (std::size_t iw = cols.lo; iw < cols.hi; ++iw) {
          const double* src = x.data() + (ih * W + iw) * row;
          for (std::size_t e = 0; e < row; ++e) {
            if (src[e] > o[e]) o[e] = src[e];
          }
        }
      }
    }
  }
  return out;
}

BackwardResult maxpool_backward(const Tensor& x, const Tensor& p_out,
                                const LayerSpec& spec) {
  require_kind(spec, LayerKind::maxpool);
  const Shape& in = x.shape();
  const Shape out_shape = output_shape(spec, in);
  require_same_shape(out_shape, p_out.shape(), "maxpool_backward projection");
  const std::size_t H = in.height(), W = in.width();
  const std::size_t row = in.channels() * in.batch();

  BackwardResult result;
  result.input_derivative = Tensor(in);
  std::vector<double> best(row);
  std::vector<std::size_t> where(row);
  for (std::size_t oh = 0; oh < out_shape.height(); ++oh) {
    const Span1d rows =
        window_span(oh, spec.stride, spec.pad.top, spec.kernel_h, H);
    for (std::size_t ow = 0; ow < out_shape.width(); ++ow) {
      const Span1d cols =
          window_span(ow, spec.stride, spec.pad.left, spec.kernel_w, W);
      std::fill(best.begin(), best.end(),
                -std::numeric_limits<double>::infinity());
      std::fill(where.begin(), where.end(), rows.lo * W + cols.lo);
      for (std::size_t ih = rows.lo; ih < rows.hi; ++ih) {
        for (std::size_t iw = cols.lo; iw < cols.hi; ++iw) {
          const double* src = x.data() + (ih * W + iw) * row;
          for (std::size_t e = 0; e < row; ++e) {
            if (src[e] > best[e]) {
              best[e] = src[e];
              where[e] = ih * W + iw;
            }
          }
        }
      }
      const double* p = p_out.data() + (oh * out_shape.width() + ow) * row;
      double* dx = result.input_derivative.data();
      for (std::size_t e = 0; e < row; ++e) dx[where[e] * row + e] += p[e];
    }
  }
  return result;
}

Tensor avgpool_forward(const Tensor& x, const LayerSpec& spec) {
  require_kind(spec, LayerKind::avgpool);
  const Shape& in = x.shape();
  const Shape out_shape = output_shape(spec, in);
  const std::size_t H = in.height(), W = in.width();
  const std::size_t row = in.channels() * in.batch();
  Tensor out(out_shape);
  for (std::size_t oh = 0; oh < out_shape.height(); ++oh) {
    const Span1d rows =
        window_span(oh, spec.stride, spec.pad.top, spec.kernel_h, H);
    for (std::size_t ow = 0; ow < out_shape.width(); ++ow) {
      const Span1d cols =
          window_span(ow, spec.stride, spec.pad.left, spec.kernel_w, W);
      double* o = out.data() + (oh * out_shape.width() + ow) * row;
      for (std::size_t ih = rows.lo; ih < rows.hi; ++ih) {
        for (std::size_t iw = cols.lo; iw < cols.hi; ++iw) {
          const double* src = x.data() + (ih * W + iw) * row;
          for (std::size_t e = 0; e < row; ++e) o[e] += src[e];
        }
      }
      const double scale =
          1.0 / static_cast<double>((rows.hi - rows.lo) * (cols.hi - cols.lo));
      for (std::size_t e = 0; e < row; ++e) o[e] *= scale;
    }
  }
  return out;
}

BackwardResult avgpool_backward(const Shape& in, const Tensor& p_out,
                                const LayerSpec& spec) {
  require_kind(spec, LayerKind::avgpool);
  const Shape out_shape = output_shape(spec, in);
  require_same_shape(out_shape, p_out.shape(), "avgpool_backward projection");
  const std::size_t H = in.height(), W = in.width();
  const std::size_t row = in.channels() * in.batch();
  BackwardResult result;
  result.input_derivative = Tensor(in);
  for (std::size_t oh = 0; oh < out_shape.height(); ++oh) {
    const Span1d rows =
        window_span(oh, spec.stride, spec.pad.top, spec.kernel_h, H);
    for (std::size_t ow = 0; ow < out_shape.width(); ++ow) {
      const Span1d cols =
          window_span(ow, spec.stride, spec.pad.left, spec.kernel_w, W);
      const double scale =
          1.0 / static_cast<double>((rows.hi - rows.lo) * (cols.hi - cols.lo));
      const double* p = p_out.data() + (oh * out_shape.width() + ow) * row;
      for (std::size_t ih = rows.lo; ih < rows.hi; ++ih) {
        for (std::size_t iw = cols.lo; iw < cols.hi; ++iw) {
          double* dx = result.input_derivative.data() + (ih * W + iw) * row;
          for (std::size_t e = 0; e < row; ++e) dx[e] += p[e] * scale;
        }
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// fully connected

Tensor fc_forward(const Tensor& x, const LayerSpec& spec) {
  require_kind(spec, LayerKind::fully_connected);
  const Shape out_shape = output_shape(spec, x.shape());
  const std::size_t F = spec.in_channels, K = spec.out_channels,
                    N = x.shape().batch();
  Tensor out(out_shape);
  for (std::size_t k = 0; k < K; ++k) {
    std::fill(out.data() + k * N, out.data() + (k + 1) * N, spec.bias[k]);
  }
  std::vector<kernels::ProductTerm> terms(F);
  for (std::size_t f = 0; f < F; ++f) {
    terms[f] = {spec.weights.data() + f * K, x.data() + f * N};
  }
  kernels::active().accumulate_products(terms, 1, out.data(), K, N, N);
  return out;
}

BackwardResult fc_backward(const Tensor& x, const Tensor& p_out,
                           const LayerSpec& spec, bool need_input) {
  require_kind(spec, LayerKind::fully_connected);
  const Shape out_shape = output_shape(spec, x.shape());
  require_same_shape(out_shape, p_out.shape(), "fc_backward projection");
  const std::size_t F = spec.in_channels, K = spec.out_channels,
                    N = x.shape().batch();
  const auto& kern = kernels::active();
  BackwardResult result;
  if (need_input) {
    result.input_derivative = Tensor(x.shape());
    std::vector<kernels::ProductTerm> terms(K);
    for (std::size_t k = 0; k < K; ++k) {
      terms[k] = {spec.weights.data() + k, p_out.data() + k * N};
    }
    kern.accumulate_products(terms, K, result.input_derivative.data(), F, N,
                             N);
  }
  result.param_derivative = Tensor(spec.weights.shape());
  const kernels::DotTerm outer{x.data(), p_out.data()};
  kern.accumulate_dots({&outer, 1}, N, N, N, result.param_derivative.data(), F,
                       K, K);
  result.bias_derivative = Tensor(spec.bias.shape());
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) sum += p_out[k * N + n];
    result.bias_derivative[k] = sum;
  }
  return result;
}

// ---------------------------------------------------------------------------
// softmax and log loss

Tensor softmax_forward(const Tensor& logits) {
  if (logits.empty()) throw ShapeError("softmax_forward: empty input");
  const std::size_t N = logits.shape().batch();
  const std::size_t F = logits.size() / N;
  Tensor z(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < F; ++f) peak = std::max(peak, logits[f * N + n]);
    double total = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      const double e = std::exp(logits[f * N + n] - peak);
      z[f * N + n] = e;
      total += e;
    }
    for (std::size_t f = 0; f < F; ++f) z[f * N + n] /= total;
  }
  return z;
}

BackwardResult softmax_backward(const Tensor& z, const Tensor& p_out) {
  require_same_shape(z.shape(), p_out.shape(), "softmax_backward projection");
  const std::size_t N = z.shape().batch();
  const std::size_t F = z.size() / N;
  BackwardResult result;
  result.input_derivative = Tensor(z.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double weighted = 0.0;
    for (std::size_t f = 0; f < F; ++f) weighted += p_out[f * N + n] * z[f * N + n];
    for (std::size_t f = 0; f < F; ++f) {
      const std::size_t i = f * N + n;
      result.input_derivative[i] = z[i] * (p_out[i] - weighted);
    }
  }
  return result;
}

double logloss_forward(const Tensor& z, std::size_t label) {
  if (z.shape().batch() != 1) throw ShapeError("logloss_forward: batch must be 1");
  if (label >= z.size()) {
    throw ShapeError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(z.size()) + " classes");
  }
  return -std::log(std::max(z[label], kLogLossFloor));
}

// The gradient of the unclamped branch is kept below the floor so that
// confidently wrong predictions still receive a learning signal.
Tensor logloss_backward(const Tensor& z, std::size_t label) {
  if (z.shape().batch() != 1) throw ShapeError("logloss_backward: batch must be 1");
  if (label >= z.size()) {
    throw ShapeError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(z.size()) + " classes");
  }
  Tensor grad(z.shape());
  grad[label] = -1.0 / std::max(z[label], kLogLossFloor);
  return grad;
}

BatchLoss batch_logloss(const Tensor& z, std::span<const std::uint8_t> labels,
                        bool want_gradient) {
  const std::size_t N = z.shape().batch();
  if (labels.size() != N) {
    throw ShapeError("batch_logloss: " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(N));
  }
  const std::size_t F = z.size() / N;
  BatchLoss out;
  if (want_gradient) out.gradient = Tensor(z.shape());
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t label = labels[n];
    if (label >= F) {
      throw ShapeError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(F) + " classes");
    }
    const double p = std::max(z[label * N + n], kLogLossFloor);
    total += -std::log(p);
    std::size_t best = 0;
    for (std::size_t f = 1; f < F; ++f) {
      if (z[f * N + n] > z[best * N + n]) best = f;
    }
    if (best != label) ++out.errors;
    if (want_gradient) {
      out.gradient[label * N + n] = -1.0 / (p * static_cast<double>(N));
    }
  }
  out.mean_loss = total / static_cast<double>(N);
  return out;
}

Tensor layer_forward(const LayerSpec& spec, const Tensor& x) {
  switch (spec.kind) {
    case LayerKind::conv: return conv_forward(x, spec);
    case LayerKind::relu: return relu_forward(x);
    case LayerKind::maxpool: return maxpool_forward(x, spec);
    case LayerKind::avgpool: return avgpool_forward(x, spec);
    case LayerKind::fully_connected: return fc_forward(x, spec);
    case LayerKind::softmax: return softmax_forward(x);
  }
  throw ShapeError("unknown layer kind");
}

BackwardResult layer_backward(const LayerSpec& spec, const Tensor& x,
                              const Tensor& y, const Tensor& p_out,
                              bool need_input) {
  switch (spec.kind) {
    case LayerKind::conv: return conv_backward(x, p_out, spec, need_input);
    case LayerKind::relu: return relu_backward(x, p_out);
    case LayerKind::maxpool: return maxpool_backward(x, p_out, spec);
    case LayerKind::avgpool: return avgpool_backward(x.shape(), p_out, spec);
    case LayerKind::fully_connected: return fc_backward(x, p_out, spec, need_input);
    case LayerKind::softmax: return softmax_backward(y, p_out);
  }
  throw ShapeError("unknown layer kind");
}

}  // namespace spectral_gain
