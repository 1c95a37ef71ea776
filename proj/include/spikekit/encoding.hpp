#pragma once

#include <string>

#include "spikekit/data.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

enum class EncoderKind { tc, sf, mw };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::sf;
  double factor = 1.0;     // TC threshold scale
  double threshold = 0.1;  // SF / MW threshold
  int window = 3;          // MW baseline window

  void validate() const;
};

/// Ternary spike train plus the metadata step-forward decoding needs.
struct SpikeTrain {
  Tensor values;  // [T] with entries in {-1, 0, +1}
  EncoderKind kind = EncoderKind::sf;
  double initial = 0.0;    // s[0]
  double threshold = 0.0;  // threshold in effect during encoding
};

/// Temporal contrast: spikes where the first difference exceeds a threshold
/// derived from the mean and standard deviation of |first differences|
/// scaled by `factor`. A zero-variance signal encodes to all zeros.
SpikeTrain encode_tc(const Tensor& signal, double factor);

/// Step-forward: moving baseline starting at s[0], moved by +-threshold on
/// each emitted spike. Strict inequalities at the threshold.
SpikeTrain encode_sf(const Tensor& signal, double threshold);

/// Moving window: baseline is the mean of the previous `window` values.
SpikeTrain encode_mw(const Tensor& signal, double threshold, int window);

/// Reconstruction r[t] = s[0] + threshold * cumsum(spikes)[t]. Only valid
/// for step-forward trains.
Tensor decode_sf(const SpikeTrain& train);

/// Fraction of nonzero entries.
double sparsity(const SpikeTrain& train);
double sparsity(const Tensor& values);

enum class RailMode { two_rail, signed_rail };

/// Encodes every channel of every sequence independently. two_rail maps
/// each channel to a non-negative (positive, negative) pair, doubling D;
/// signed_rail keeps one +-1 channel.
Dataset encode_dataset(const Dataset& sequences, const EncoderConfig& enc,
                       RailMode rails);

EncoderKind encoder_kind_from_string(const std::string& s);
RailMode rail_mode_from_string(const std::string& s);

}  // namespace spikekit
