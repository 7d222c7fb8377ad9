#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Immutable once built; X is row-major n x d.
struct Dataset {
  size_t n = 0;
  size_t d = 0;
  size_t num_classes = 0;
  std::vector<double> X;
  std::vector<uint32_t> y;

  const double* row(size_t i) const { return X.data() + i * d; }
};

// Gaussian blobs: one class mean per class, drawn uniformly on a sphere of
// radius `separation`, unit-variance features around the mean. Classes are
// balanced up to remainder and deterministic per seed.
Dataset synth_classification(size_t n, size_t d, size_t num_classes,
                             double separation, uint64_t seed);

// Big-endian IDX parser (MNIST layout): u8 images with magic 0x00000803,
// u8 labels with magic 0x00000801. Pixels scale to [0,1]; counts are
// cross-checked between the two files.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// IDX writers for fixtures and round-trip tests. Pixel doubles are written
// back as round(p * 255).
void write_idx_images(const std::string& path, const Dataset& ds, size_t rows, size_t cols);
void write_idx_labels(const std::string& path, const Dataset& ds);

}  // namespace fedsim
