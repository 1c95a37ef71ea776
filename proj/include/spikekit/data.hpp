#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spikekit/tensor.hpp"

namespace spikekit {

/// Inputs are [N x T x D] sequences or [N x D] flat vectors; labels are
/// integer class ids in [0, class_count).
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  int class_count = 0;

  bool sequential() const { return inputs.rank() == 3; }
  int size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
  void validate() const;
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
  int size() const { return static_cast<int>(labels.size()); }
};

/// Parses big-endian IDX files: magic 2051 (images, 3 dims) and 2049
/// (labels, 1 dim). Pixel bytes are scaled to [0, 1]; images come back
/// flattened to [N x rows*cols].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a flat [N x rows*cols] dataset back to IDX (values quantized to
/// bytes). Counterpart of load_idx, used for fixtures and cached subsets.
void write_idx(const std::string& images_path, const std::string& labels_path,
               const Tensor& flat_images, int rows, int cols,
               const std::vector<int>& labels);

enum class SequenceMode { row_scan, threshold_crossing };

/// Converts flat square images to sequences: row_scan feeds one row per
/// timestep; threshold_crossing emits one spike per pixel, brighter earlier.
Dataset image_to_sequence(const Dataset& flat, SequenceMode mode, int steps);

struct SyntheticConfig {
  int n = 256;
  int steps = 50;      // T for sequence tasks
  double noise = 0.1;
  int dims = 2;        // gaussian_blobs input dimension
  int classes = 2;     // gaussian_blobs class count
  double blob_std = 0.3;
};

/// Desk-scale synthetic tasks: `two_sines` (classify the frequency of a
/// noisy sinusoid), `pattern_detect` (detect a planted subsequence),
/// `gaussian_blobs` (flat vectors for MLP tests). Class-balanced by
/// construction, deterministic under the seed.
Dataset synthetic_task(const std::string& name, std::uint64_t seed,
                       const SyntheticConfig& cfg);

/// Procedurally rendered 28x28 digit glyphs (10 classes) with random shift,
/// intensity jitter and pixel noise. Stand-in for digit-image experiments
/// when no IDX files are supplied.
Dataset synthetic_digits(int n, std::uint64_t seed, double noise = 0.15);

/// Comma-separated rows: label followed by T*D values.
Dataset load_delimited_sequences(const std::string& path, int steps, int dims);
void write_delimited_sequences(const std::string& path, const Dataset& data);

std::vector<int> shuffled_indices(int n, std::mt19937_64& rng);
Batch take_batch(const Dataset& d, const std::vector<int>& order, int from,
                 int to);
Batch full_batch(const Dataset& d);
Dataset subset(const Dataset& d, int count);

}  // namespace spikekit
