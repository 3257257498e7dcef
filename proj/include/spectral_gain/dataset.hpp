#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spectral_gain/tensor.hpp"

namespace spectral_gain {

enum class Split { train, validation };

struct Dataset {
  Tensor images;                     // (h, w, c, n), raw 0..255 or mean-subtracted
  std::vector<std::uint8_t> labels;  // n entries, each < 10
  Tensor mean_image;                 // (h, w, c); from the training split only
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const;
};

// Big-endian IDX pair: images magic 2051 (n, rows, cols), labels magic 2049
// (n). Throws FormatError on bad magic, truncation or count mismatch.
Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path);

// Concatenated 3073-byte records: one label byte, then 1024 bytes per
// channel (R, G, B) in row-major 32x32 order.
Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths);

// Per-pixel mean over all examples, shaped (h, w, c).
Tensor compute_mean_image(const Tensor& images);

// Subtracts `mean_image` from every example and records it on the result.
Dataset preprocess(const Dataset& ds, const Tensor& mean_image);

// First `count` examples (or all when count >= size).
Dataset take_prefix(const Dataset& ds, std::size_t count);

// Training and validation splits for a named dataset, both preprocessed with
// the training-split mean image. `name` is "mnist" or "cifar10"; `root`
// holds mnist/ or cifar-10-batches-bin/. Throws IoError when files are
// missing.
struct DatasetPair {
  Dataset train;
  Dataset validation;
};
DatasetPair load_named(const std::string& name, const std::filesystem::path& root,
                       std::size_t train_limit = 0);

// Dataset files expected under `root` for `name`.
std::vector<std::filesystem::path> dataset_files(const std::string& name,
                                                 const std::filesystem::path& root);

// Fisher-Yates permutation of [0, n) seeded from (seed, epoch); identical on
// every platform.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed,
                                           std::uint64_t epoch);

// Consecutive slices of the epoch permutation; the final short batch is
// kept.
std::vector<std::vector<std::size_t>> shuffled_batches(const Dataset& ds,
                                                       std::size_t batch_size,
                                                       std::uint64_t seed,
                                                       std::uint64_t epoch);

struct Batch {
  Tensor images;                     // (h, w, c, b)
  std::vector<std::uint8_t> labels;  // b entries
};

Batch gather_batch(const Dataset& ds, std::span<const std::size_t> indices);

// Examples [first, first + count) in storage order.
Batch slice_batch(const Dataset& ds, std::size_t first, std::size_t count);

}  // namespace spectral_gain
