#include "spectral_gain/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "spectral_gain/error.hpp"

namespace spectral_gain {

namespace {

constexpr std::uint32_t kIdxImageMagic = 2051;
constexpr std::uint32_t kIdxLabelMagic = 2049;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarChannels = 3;
constexpr std::size_t kCifarRecord = 1 + kCifarSide * kCifarSide * kCifarChannels;
constexpr std::size_t kNumClasses = 10;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t big_endian_u32(const std::vector<unsigned char>& bytes,
                             std::size_t pos) {
  return (std::uint32_t{bytes[pos]} << 24) | (std::uint32_t{bytes[pos + 1]} << 16) |
         (std::uint32_t{bytes[pos + 2]} << 8) | std::uint32_t{bytes[pos + 3]};
}

struct IdxHeader {
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset = 0;
};

IdxHeader parse_idx_header(const std::vector<unsigned char>& bytes,
                           std::uint32_t magic, std::size_t rank,
                           const std::filesystem::path& path) {
  const std::string where = " in " + path.string();
  if (bytes.size() < 4 + 4 * rank) throw FormatError("truncated IDX header" + where);
  const std::uint32_t found = big_endian_u32(bytes, 0);
  if (found != magic) {
    throw FormatError("bad IDX magic " + std::to_string(found) + " (expected " +
                      std::to_string(magic) + ")" + where);
  }
  IdxHeader header;
  header.payload_offset = 4 + 4 * rank;
  std::size_t expected = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint32_t d = big_endian_u32(bytes, 4 + 4 * i);
    if (d == 0) throw FormatError("zero IDX dimension" + where);
    header.dims.push_back(d);
    expected *= d;
  }
  if (bytes.size() - header.payload_offset != expected) {
    throw FormatError("IDX payload holds " +
                      std::to_string(bytes.size() - header.payload_offset) +
                      " bytes, header declares " + std::to_string(expected) + where);
  }
  return header;
}

// 64-bit index in [0, bound) by rejection; avoids the implementation-defined
// std::uniform_int_distribution.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % bound;
}

void check_labels(const std::vector<std::uint8_t>& labels, const std::string& where) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= kNumClasses) {
      throw FormatError("label " + std::to_string(labels[i]) + " at record " +
                        std::to_string(i) + " is outside [0, 10)" + where);
    }
  }
}

}  // namespace

Shape Dataset::example_shape() const {
  const Shape& s = images.shape();
  return Shape{s.height(), s.width(), s.channels()};
}

Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path) {
  const std::vector<unsigned char> image_bytes = read_file(images_path);
  const std::vector<unsigned char> label_bytes = read_file(labels_path);
  const IdxHeader ih = parse_idx_header(image_bytes, kIdxImageMagic, 3, images_path);
  const IdxHeader lh = parse_idx_header(label_bytes, kIdxLabelMagic, 1, labels_path);
  const std::size_t n = ih.dims[0];
  if (lh.dims[0] != n) {
    throw FormatError("image file holds " + std::to_string(n) +
                      " examples but label file holds " + std::to_string(lh.dims[0]));
  }
  const std::size_t rows = ih.dims[1];
  const std::size_t cols = ih.dims[2];

  Dataset ds;
  ds.images = Tensor(image_shape(rows, cols, 1, n));
  double* out = ds.images.data();
  const unsigned char* pixels = image_bytes.data() + ih.payload_offset;
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t p = 0; p < rows * cols; ++p) {
      out[p * n + e] = pixels[e * rows * cols + p];
    }
  }
  ds.labels.assign(label_bytes.begin() + static_cast<std::ptrdiff_t>(lh.payload_offset),
                   label_bytes.end());
  check_labels(ds.labels, " in " + labels_path.string());
  return ds;
}

Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths) {
  std::vector<std::vector<unsigned char>> files;
  std::size_t n = 0;
  for (const auto& path : batch_paths) {
    files.push_back(read_file(path));
    const std::size_t bytes = files.back().size();
    if (bytes == 0 || bytes % kCifarRecord != 0) {
      throw FormatError(path.string() + ": length " + std::to_string(bytes) +
                        " is not a positive multiple of 3073");
    }
    n += bytes / kCifarRecord;
  }
  if (n == 0) throw FormatError("no CIFAR-10 batch files given");

  constexpr std::size_t plane = kCifarSide * kCifarSide;
  Dataset ds;
  ds.images = Tensor(image_shape(kCifarSide, kCifarSide, kCifarChannels, n));
  ds.labels.reserve(n);
  double* out = ds.images.data();
  std::size_t e = 0;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const std::vector<unsigned char>& bytes = files[f];
    for (std::size_t rec = 0; rec < bytes.size() / kCifarRecord; ++rec, ++e) {
      const unsigned char* r = bytes.data() + rec * kCifarRecord;
      if (r[0] >= kNumClasses) {
        throw FormatError(batch_paths[f].string() + ": label " + std::to_string(r[0]) +
                          " at record " + std::to_string(rec) + " is outside [0, 10)");
      }
      ds.labels.push_back(r[0]);
      for (std::size_t c = 0; c < kCifarChannels; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          out[(p * kCifarChannels + c) * n + e] = r[1 + c * plane + p];
        }
      }
    }
  }
  return ds;
}

Tensor compute_mean_image(const Tensor& images) {
  const Shape& s = images.shape();
  const std::size_t n = s.batch();
  const std::size_t pixels = images.size() / n;
  Tensor mean(Shape{s.height(), s.width(), s.channels()});
  for (std::size_t p = 0; p < pixels; ++p) {
    double total = 0.0;
    for (std::size_t e = 0; e < n; ++e) total += images[p * n + e];
    mean[p] = total / static_cast<double>(n);
  }
  return mean;
}

Dataset preprocess(const Dataset& ds, const Tensor& mean_image) {
  if (mean_image.size() * ds.size() != ds.images.size() ||
      mean_image.shape().height() != ds.images.shape().height() ||
      mean_image.shape().width() != ds.images.shape().width() ||
      mean_image.shape().channels() != ds.images.shape().channels()) {
    throw ShapeError("mean image " + mean_image.shape().to_string() +
                     " does not match examples of " + ds.images.shape().to_string());
  }
  Dataset out = ds;
  const std::size_t n = ds.size();
  for (std::size_t p = 0; p < mean_image.size(); ++p) {
    for (std::size_t e = 0; e < n; ++e) out.images[p * n + e] -= mean_image[p];
  }
  out.mean_image = mean_image;
  return out;
}

Dataset take_prefix(const Dataset& ds, std::size_t count) {
  if (count >= ds.size()) return ds;
  if (count == 0) throw ShapeError("take_prefix: count must be >= 1");
  Batch b = slice_batch(ds, 0, count);
  Dataset out;
  out.images = std::move(b.images);
  out.labels = std::move(b.labels);
  out.mean_image = ds.mean_image;
  out.split = ds.split;
  return out;
}

std::vector<std::filesystem::path> dataset_files(const std::string& name,
                                                 const std::filesystem::path& root) {
  if (name == "mnist") {
    const auto dir = root / "mnist";
    return {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
            dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
  }
  if (name == "cifar10") {
    const auto dir = root / "cifar-10-batches-bin";
    std::vector<std::filesystem::path> files;
    for (int i = 1; i <= 5; ++i) {
      files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    }
    files.push_back(dir / "test_batch.bin");
    return files;
  }
  throw ConfigError("unknown dataset '" + name + "' (expected mnist or cifar10)");
}

DatasetPair load_named(const std::string& name, const std::filesystem::path& root,
                       std::size_t train_limit) {
  const std::vector<std::filesystem::path> files = dataset_files(name, root);
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) throw IoError("missing dataset file " + f.string());
  }
  Dataset train;
  Dataset validation;
  if (name == "mnist") {
    train = load_mnist(files[0], files[1]);
    validation = load_mnist(files[2], files[3]);
  } else {
    train = load_cifar10(std::span(files).first(5));
    validation = load_cifar10(std::span(files).last(1));
  }
  if (train_limit > 0) train = take_prefix(train, train_limit);
  const Tensor mean = compute_mean_image(train.images);
  DatasetPair pair{preprocess(train, mean), preprocess(validation, mean)};
  pair.train.split = Split::train;
  pair.validation.split = Split::validation;
  return pair;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                           std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[bounded(rng, i)]);
  }
  return order;
}

std::vector<std::vector<std::size_t>> shuffled_batches(const Dataset& ds,
                                                       std::size_t batch_size,
                                                       std::uint64_t seed,
                                                       std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  const std::vector<std::size_t> order = epoch_permutation(ds.size(), seed, epoch);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

Batch gather_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("gather_batch: no indices");
  const Shape& s = ds.images.shape();
  const std::size_t n = ds.size();
  const std::size_t b = indices.size();
  const std::size_t pixels = ds.images.size() / n;
  Batch batch;
  batch.images = Tensor(image_shape(s.height(), s.width(), s.channels(), b));
  batch.labels.reserve(b);
  for (std::size_t j = 0; j < b; ++j) {
    if (indices[j] >= n) throw ShapeError("gather_batch: index out of range");
    batch.labels.push_back(ds.labels[indices[j]]);
  }
  const double* src = ds.images.data();
  double* dst = batch.images.data();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t j = 0; j < b; ++j) dst[p * b + j] = src[p * n + indices[j]];
  }
  return batch;
}

Batch slice_batch(const Dataset& ds, std::size_t first, std::size_t count) {
  if (first + count > ds.size()) throw ShapeError("slice_batch: range out of bounds");
  std::vector<std::size_t> indices(count);
  for (std::size_t j = 0; j < count; ++j) indices[j] = first + j;
  return gather_batch(ds, indices);
}

}  // namespace spectral_gain
