#include "fedsim/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace fedsim {

namespace {

constexpr uint32_t kIdxImageMagic = 0x00000803;
constexpr uint32_t kIdxLabelMagic = 0x00000801;

uint32_t read_be_u32(std::istream& in, const char* what) {
  uint8_t buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw Truncated(std::string("load_idx: truncated reading ") + what);
  return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
         uint32_t(buf[3]);
}

void write_be_u32(std::ostream& out, uint32_t v) {
  uint8_t buf[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

Dataset synth_classification(size_t n, size_t d, size_t num_classes,
                             double separation, uint64_t seed) {
  if (num_classes < 2 || n < num_classes || d < 1) {
    throw BadSpec("synth_classification: need n >= num_classes >= 2 and d >= 1");
  }
  Rng rng(seed, {0x5d5ULL});  // dataset stream label
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.num_classes = num_classes;
  ds.X.resize(n * d);
  ds.y.resize(n);

  // Class means: random direction scaled to the sphere radius.
  std::vector<double> means(num_classes * d);
  for (size_t c = 0; c < num_classes; ++c) {
    double norm2 = 0.0;
    for (size_t j = 0; j < d; ++j) {
      means[c * d + j] = rng.normal();
      norm2 += means[c * d + j] * means[c * d + j];
    }
    const double scale = separation / std::sqrt(std::max(norm2, 1e-300));
    for (size_t j = 0; j < d; ++j) means[c * d + j] *= scale;
  }

  // Balanced labels: sample i belongs to class i mod num_classes, so counts
  // differ by at most one.
  for (size_t i = 0; i < n; ++i) {
    const size_t c = i % num_classes;
    ds.y[i] = static_cast<uint32_t>(c);
    for (size_t j = 0; j < d; ++j) {
      ds.X[i * d + j] = means[c * d + j] + rng.normal();
    }
  }
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw Truncated("load_idx: cannot open " + images_path);
  const uint32_t img_magic = read_be_u32(img, "image magic");
  if (img_magic != kIdxImageMagic) throw BadMagic("load_idx: bad image magic");
  const uint32_t n = read_be_u32(img, "image count");
  const uint32_t rows = read_be_u32(img, "rows");
  const uint32_t cols = read_be_u32(img, "cols");
  const size_t d = size_t(rows) * cols;

  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.X.resize(size_t(n) * d);
  std::vector<uint8_t> buf(d);
  for (uint32_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), std::streamsize(d));
    if (!img) throw Truncated("load_idx: truncated image data");
    for (size_t j = 0; j < d; ++j) ds.X[size_t(i) * d + j] = buf[j] / 255.0;
  }

  std::ifstream lbl(labels_path, std::ios::binary);
  if (!lbl) throw Truncated("load_idx: cannot open " + labels_path);
  const uint32_t lbl_magic = read_be_u32(lbl, "label magic");
  if (lbl_magic != kIdxLabelMagic) throw BadMagic("load_idx: bad label magic");
  const uint32_t n_labels = read_be_u32(lbl, "label count");
  if (n_labels != n) throw CountMismatch("load_idx: image/label counts differ");
  ds.y.resize(n);
  std::vector<uint8_t> lbuf(n);
  lbl.read(reinterpret_cast<char*>(lbuf.data()), std::streamsize(n));
  if (!lbl) throw Truncated("load_idx: truncated label data");
  uint32_t max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    ds.y[i] = lbuf[i];
    max_label = std::max(max_label, ds.y[i]);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

void write_idx_images(const std::string& path, const Dataset& ds, size_t rows, size_t cols) {
  if (rows * cols != ds.d) throw BadSpec("write_idx_images: rows*cols must equal d");
  std::ofstream out(path, std::ios::binary);
  write_be_u32(out, kIdxImageMagic);
  write_be_u32(out, uint32_t(ds.n));
  write_be_u32(out, uint32_t(rows));
  write_be_u32(out, uint32_t(cols));
  for (double p : ds.X) {
    const uint8_t byte = static_cast<uint8_t>(std::lround(p * 255.0));
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

void write_idx_labels(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  write_be_u32(out, kIdxLabelMagic);
  write_be_u32(out, uint32_t(ds.n));
  for (uint32_t label : ds.y) {
    const uint8_t byte = static_cast<uint8_t>(label);
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

}  // namespace fedsim
