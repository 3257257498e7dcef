#include "spectral_gain/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "spectral_gain/config.hpp"
#include "spectral_gain/error.hpp"

namespace spectral_gain {

namespace {

void check_plane(const Tensor& plane) {
  if (plane.empty() || plane.size() != plane.shape().height() * plane.shape().width()) {
    throw ShapeError("expected a non-empty 2-D plane, got " + plane.shape().to_string());
  }
}

// Reads one whitespace-separated header token, skipping '#' comments.
std::string header_token(const std::vector<unsigned char>& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) token.push_back(static_cast<char>(bytes[pos++]));
  return token;
}

std::size_t header_number(const std::vector<unsigned char>& bytes, std::size_t& pos,
                          const std::filesystem::path& path) {
  const std::string token = header_token(bytes, pos);
  if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit) || token.size() > 9) {
    throw FormatError(path.string() + ": malformed PNM header");
  }
  return std::stoul(token);
}

}  // namespace

void write_matrix(const Tensor& plane, const std::filesystem::path& path) {
  check_plane(plane);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t h = plane.shape().height();
  const std::size_t w = plane.shape().width();
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (c) out << ' ';
      out << format_double(plane[r * w + c]);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t count = 0;
    for (std::string token; ss >> token; ++count) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        if (token == "nan" || token == "inf" || token == "-inf") {
          values.push_back(std::stod(token));
        } else {
          throw FormatError(path.string() + ": non-numeric entry '" + token + "'");
        }
      }
    }
    if (rows == 0) cols = count;
    if (count != cols) throw FormatError(path.string() + ": ragged matrix rows");
    ++rows;
  }
  if (rows == 0) throw FormatError(path.string() + ": empty matrix");
  return Tensor(Shape{rows, cols}, std::move(values));
}

void write_pgm(const Tensor& plane, const std::filesystem::path& path) {
  check_plane(plane);
  const auto [lo, hi] = std::minmax_element(plane.values().begin(), plane.values().end());
  const double span = *hi - *lo;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << plane.shape().width() << ' ' << plane.shape().height() << "\n255\n";
  for (double v : plane.values()) {
    const double scaled = span > 0.0 ? (v - *lo) / span * 255.0 : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(scaled + 0.5, 0.0, 255.0))));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  const std::string magic = header_token(bytes, pos);
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError(path.string() + ": only binary P5/P6 images are supported");
  }
  const std::size_t width = header_number(bytes, pos, path);
  const std::size_t height = header_number(bytes, pos, path);
  const std::size_t maxval = header_number(bytes, pos, path);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255) {
    throw FormatError(path.string() + ": unsupported PNM dimensions or maxval");
  }
  ++pos;  // single whitespace byte before the raster
  const std::size_t count = width * height * channels;
  if (pos > bytes.size() || bytes.size() - pos < count) {
    throw FormatError(path.string() + ": truncated PNM raster");
  }
  Tensor img(Shape{height, width, channels});
  for (std::size_t i = 0; i < count; ++i) img[i] = bytes[pos + i];
  return img;
}

}  // namespace spectral_gain
