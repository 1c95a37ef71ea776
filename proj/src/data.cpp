#include "spikekit/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace spikekit {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), 4);
  if (!in)
    throw std::runtime_error("truncated IDX file: " + path);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> buf{
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf.data()), 4);
}

// 5x7 glyph stencils for digits 0..9, one string per row.
const std::array<std::array<const char*, 7>, 10> kDigitFont = {{
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
}};

}  // namespace

void Dataset::validate() const {
  if (static_cast<int>(labels.size()) != size())
    throw std::invalid_argument("dataset has " + std::to_string(size()) +
                                " inputs but " + std::to_string(labels.size()) +
                                " labels");
  for (int y : labels)
    if (y < 0 || y >= class_count)
      throw std::invalid_argument("label " + std::to_string(y) +
                                  " out of range [0," +
                                  std::to_string(class_count) + ")");
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + labels_path);

  const std::uint32_t img_magic = read_be32(img, images_path);
  if (img_magic != 2051)
    throw std::runtime_error("expected image magic 2051 in " + images_path +
                             ", found " + std::to_string(img_magic));
  const int n = static_cast<int>(read_be32(img, images_path));
  const int rows = static_cast<int>(read_be32(img, images_path));
  const int cols = static_cast<int>(read_be32(img, images_path));

  const std::uint32_t lab_magic = read_be32(lab, labels_path);
  if (lab_magic != 2049)
    throw std::runtime_error("expected label magic 2049 in " + labels_path +
                             ", found " + std::to_string(lab_magic));
  const int n_lab = static_cast<int>(read_be32(lab, labels_path));
  if (n != n_lab)
    throw std::runtime_error("IDX image count " + std::to_string(n) +
                             " does not match label count " +
                             std::to_string(n_lab));

  const std::int64_t pixels = static_cast<std::int64_t>(n) * rows * cols;
  std::vector<unsigned char> raw(static_cast<size_t>(pixels));
  img.read(reinterpret_cast<char*>(raw.data()), pixels);
  if (img.gcount() != pixels)
    throw std::runtime_error("truncated IDX file: " + images_path);

  std::vector<unsigned char> raw_lab(static_cast<size_t>(n));
  lab.read(reinterpret_cast<char*>(raw_lab.data()), n);
  if (lab.gcount() != n)
    throw std::runtime_error("truncated IDX file: " + labels_path);

  Dataset d;
  d.inputs = Tensor({n, rows * cols});
  for (std::int64_t i = 0; i < pixels; ++i)
    d.inputs.data()[i] = raw[static_cast<size_t>(i)] / 255.0;
  d.labels.reserve(static_cast<size_t>(n));
  int max_label = 0;
  for (unsigned char y : raw_lab) {
    d.labels.push_back(y);
    max_label = std::max(max_label, static_cast<int>(y));
  }
  d.class_count = max_label + 1;
  d.validate();
  return d;
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const Tensor& flat_images, int rows, int cols,
               const std::vector<int>& labels) {
  if (flat_images.rank() != 2 || flat_images.dim(1) != rows * cols)
    throw std::invalid_argument("write_idx: images " + flat_images.shape_str() +
                                " do not match " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  const int n = flat_images.dim(0);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("write_idx: label count mismatch");

  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot write " + images_path);
  write_be32(img, 2051);
  write_be32(img, static_cast<std::uint32_t>(n));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (std::int64_t i = 0; i < flat_images.size(); ++i) {
    const double v = std::clamp(flat_images.data()[i], 0.0, 1.0);
    const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
    img.write(reinterpret_cast<const char*>(&b), 1);
  }

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot write " + labels_path);
  write_be32(lab, 2049);
  write_be32(lab, static_cast<std::uint32_t>(n));
  for (int y : labels) {
    const unsigned char b = static_cast<unsigned char>(y);
    lab.write(reinterpret_cast<const char*>(&b), 1);
  }
}

Dataset image_to_sequence(const Dataset& flat, SequenceMode mode, int steps) {
  if (flat.inputs.rank() != 2)
    throw std::invalid_argument("image_to_sequence expects flat images, got " +
                                flat.inputs.shape_str());
  const int n = flat.inputs.dim(0), d = flat.inputs.dim(1);
  const int side = static_cast<int>(std::lround(std::sqrt(double(d))));
  if (side * side != d)
    throw std::invalid_argument("image_to_sequence needs square images, got " +
                                std::to_string(d) + " pixels");
  Dataset out;
  out.labels = flat.labels;
  out.class_count = flat.class_count;
  if (mode == SequenceMode::row_scan) {
    out.inputs = Tensor({n, side, side});
    std::copy(flat.inputs.values().begin(), flat.inputs.values().end(),
              out.inputs.values().begin());
    return out;
  }
  if (steps < 1)
    throw std::invalid_argument("threshold_crossing needs steps >= 1");
  out.inputs = Tensor({n, steps, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double p = flat.inputs(i, j);
      if (p <= 0.0) continue;  // dark pixels never spike
      const int t = static_cast<int>(std::lround((1.0 - p) * (steps - 1)));
      out.inputs(i, t, j) = 1.0;
    }
  return out;
}

Dataset synthetic_task(const std::string& name, std::uint64_t seed,
                       const SyntheticConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset d;

  if (name == "two_sines") {
    d.inputs = Tensor({cfg.n, cfg.steps, 1});
    d.class_count = 2;
    for (int i = 0; i < cfg.n; ++i) {
      const int label = i % 2;
      const double freq = label == 0 ? 2.0 : 4.0;
      const double phase = unif(rng) * 2.0 * kPi;
      for (int t = 0; t < cfg.steps; ++t)
        d.inputs(i, t, 0) = std::sin(2.0 * kPi * freq * t / cfg.steps + phase) +
                            cfg.noise * gauss(rng);
      d.labels.push_back(label);
    }
  } else if (name == "pattern_detect") {
    const int channels = 3, motif_len = 5;
    if (cfg.steps < motif_len + 2)
      throw std::invalid_argument("pattern_detect needs steps >= 7");
    d.inputs = Tensor({cfg.n, cfg.steps, channels});
    d.class_count = 2;
    std::uniform_int_distribution<int> start(1, cfg.steps - motif_len - 1);
    for (int i = 0; i < cfg.n; ++i) {
      const int label = i % 2;
      for (int t = 0; t < cfg.steps; ++t)
        for (int c = 0; c < channels; ++c)
          d.inputs(i, t, c) = unif(rng) < 0.15 ? 1.0 : 0.0;
      if (label == 1) {
        const int p = start(rng);
        for (int t = p; t < p + motif_len; ++t)
          for (int c = 0; c < channels; ++c) d.inputs(i, t, c) = 1.0;
      }
      d.labels.push_back(label);
    }
  } else if (name == "gaussian_blobs") {
    if (cfg.dims < 2) throw std::invalid_argument("gaussian_blobs needs dims >= 2");
    d.inputs = Tensor({cfg.n, cfg.dims});
    d.class_count = cfg.classes;
    for (int i = 0; i < cfg.n; ++i) {
      const int label = i % cfg.classes;
      const double angle = 2.0 * kPi * label / cfg.classes;
      for (int j = 0; j < cfg.dims; ++j) {
        const double center = j == 0 ? std::cos(angle)
                             : j == 1 ? std::sin(angle)
                                      : 0.0;
        d.inputs(i, j) = center + cfg.blob_std * gauss(rng);
      }
      d.labels.push_back(label);
    }
  } else {
    throw std::invalid_argument(
        "unknown synthetic task '" + name +
        "' (valid: two_sines, pattern_detect, gaussian_blobs)");
  }
  d.validate();
  return d;
}

Dataset synthetic_digits(int n, std::uint64_t seed, double noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> shift(-4, 4);
  std::uniform_int_distribution<int> stroke(2, 3);
  std::uniform_real_distribution<double> tone(0.55, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int side = 28;
  Dataset d;
  d.inputs = Tensor({n, side * side});
  d.class_count = 10;
  for (int i = 0; i < n; ++i) {
    const int digit = i % 10;
    const int scale = stroke(rng);  // glyph size jitter
    const int off_r = (side - 7 * scale) / 2 + shift(rng);
    const int off_c = (side - 5 * scale) / 2 + shift(rng);
    const double intensity = tone(rng);
    for (int fr = 0; fr < 7; ++fr)
      for (int fc = 0; fc < 5; ++fc) {
        if (kDigitFont[static_cast<size_t>(digit)][static_cast<size_t>(fr)][fc] != '1')
          continue;
        if (unif(rng) < 0.03) continue;  // occasional broken stroke
        for (int dr = 0; dr < scale; ++dr)
          for (int dc = 0; dc < scale; ++dc) {
            const int r = off_r + fr * scale + dr;
            const int c = off_c + fc * scale + dc;
            if (r >= 0 && r < side && c >= 0 && c < side)
              d.inputs(i, r * side + c) = intensity;
          }
      }
    for (int j = 0; j < side * side; ++j) {
      double v = d.inputs(i, j) + noise * gauss(rng);
      if (unif(rng) < 0.02) v += 0.8 * unif(rng);  // background speckle
      d.inputs(i, j) = std::clamp(v, 0.0, 1.0);
    }
    d.labels.push_back(digit);
  }
  d.validate();
  return d;
}

Dataset load_delimited_sequences(const std::string& path, int steps, int dims) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const int fields = 1 + steps * dims;
  std::vector<double> values;
  std::vector<int> labels;
  std::string line;
  int line_no = 0, n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": cannot parse '" + cell + "'");
      }
    }
    if (static_cast<int>(row.size()) != fields)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               " has " + std::to_string(row.size()) +
                               " fields, expected " + std::to_string(fields));
    labels.push_back(static_cast<int>(std::lround(row[0])));
    values.insert(values.end(), row.begin() + 1, row.end());
    ++n;
  }
  if (n == 0) throw std::runtime_error(path + ": no samples");
  Dataset d;
  d.inputs = Tensor({n, steps, dims}, std::move(values));
  d.labels = std::move(labels);
  d.class_count = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.validate();
  return d;
}

void write_delimited_sequences(const std::string& path, const Dataset& data) {
  if (!data.sequential())
    throw std::invalid_argument("write_delimited_sequences expects sequences");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int n = data.size(), steps = data.inputs.dim(1), dims = data.inputs.dim(2);
  char buf[32];
  for (int i = 0; i < n; ++i) {
    out << data.labels[static_cast<size_t>(i)];
    for (int t = 0; t < steps; ++t)
      for (int j = 0; j < dims; ++j) {
        std::snprintf(buf, sizeof buf, "%.12g", data.inputs(i, t, j));
        out << ',' << buf;
      }
    out << '\n';
  }
}

std::vector<int> shuffled_indices(int n, std::mt19937_64& rng) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Batch take_batch(const Dataset& d, const std::vector<int>& order, int from,
                 int to) {
  if (from < 0 || to > static_cast<int>(order.size()) || from >= to)
    throw std::invalid_argument("take_batch: bad range");
  Batch b;
  const int count = to - from;
  if (d.sequential()) {
    const int steps = d.inputs.dim(1), dims = d.inputs.dim(2);
    b.inputs = Tensor({count, steps, dims});
    for (int i = 0; i < count; ++i) {
      const int src = order[static_cast<size_t>(from + i)];
      for (int t = 0; t < steps; ++t)
        for (int j = 0; j < dims; ++j)
          b.inputs(i, t, j) = d.inputs(src, t, j);
    }
  } else {
    const int dims = d.inputs.dim(1);
    b.inputs = Tensor({count, dims});
    for (int i = 0; i < count; ++i) {
      const int src = order[static_cast<size_t>(from + i)];
      for (int j = 0; j < dims; ++j) b.inputs(i, j) = d.inputs(src, j);
    }
  }
  for (int i = from; i < to; ++i)
    b.labels.push_back(d.labels[static_cast<size_t>(order[static_cast<size_t>(i)])]);
  return b;
}

Batch full_batch(const Dataset& d) {
  std::vector<int> idx(static_cast<size_t>(d.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return take_batch(d, idx, 0, d.size());
}

Dataset subset(const Dataset& d, int count) {
  if (count >= d.size()) return d;
  Batch b;
  std::vector<int> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  b = take_batch(d, idx, 0, count);
  Dataset out;
  out.inputs = std::move(b.inputs);
  out.labels = std::move(b.labels);
  out.class_count = d.class_count;
  return out;
}

}  // namespace spikekit
