#include "spikekit/encoding.hpp"

#include <cmath>
#include <stdexcept>

namespace spikekit {

namespace {

void check_1d(const Tensor& signal, const char* op) {
  if (signal.rank() != 1)
    throw std::invalid_argument(std::string(op) + " expects a 1-D signal, got " +
                                signal.shape_str());
}

void check_threshold(double threshold) {
  if (threshold <= 0.0)
    throw std::invalid_argument("encoder threshold must be positive, got " +
                                std::to_string(threshold));
}

}  // namespace

void EncoderConfig::validate() const {
  if (factor <= 0.0)
    throw std::invalid_argument("TC factor must be positive");
  check_threshold(threshold);
  if (window < 1) throw std::invalid_argument("MW window must be >= 1");
}

SpikeTrain encode_tc(const Tensor& signal, double factor) {
  check_1d(signal, "encode_tc");
  const int n = signal.dim(0);
  if (n < 2)
    throw std::invalid_argument("encode_tc needs at least 2 samples, got " +
                                std::to_string(n));
  // First differences with the last value repeated, so d has length T.
  std::vector<double> d(static_cast<size_t>(n));
  for (int t = 0; t + 1 < n; ++t) d[static_cast<size_t>(t)] = signal(t + 1) - signal(t);
  d[static_cast<size_t>(n - 1)] = d[static_cast<size_t>(n - 2)];

  double mean_abs = 0.0;
  for (double v : d) mean_abs += std::abs(v);
  mean_abs /= n;
  double var = 0.0;
  for (double v : d) {
    const double dev = std::abs(v) - mean_abs;
    var += dev * dev;
  }
  const double thr = mean_abs + factor * std::sqrt(var / n);

  SpikeTrain train;
  train.kind = EncoderKind::tc;
  train.initial = signal(0);
  train.threshold = thr;
  train.values = Tensor({n});
  for (int t = 0; t < n; ++t) {
    const double v = d[static_cast<size_t>(t)];
    train.values(t) = v > thr ? 1.0 : v < -thr ? -1.0 : 0.0;
  }
  return train;
}

SpikeTrain encode_sf(const Tensor& signal, double threshold) {
  check_1d(signal, "encode_sf");
  check_threshold(threshold);
  const int n = signal.dim(0);
  SpikeTrain train;
  train.kind = EncoderKind::sf;
  train.initial = signal(0);
  train.threshold = threshold;
  train.values = Tensor({n});
  double base = signal(0);
  for (int t = 1; t < n; ++t) {
    if (signal(t) > base + threshold) {
      train.values(t) = 1.0;
      base += threshold;
    } else if (signal(t) < base - threshold) {
      train.values(t) = -1.0;
      base -= threshold;
    }
  }
  return train;
}

SpikeTrain encode_mw(const Tensor& signal, double threshold, int window) {
  check_1d(signal, "encode_mw");
  check_threshold(threshold);
  if (window < 1) throw std::invalid_argument("MW window must be >= 1");
  const int n = signal.dim(0);
  SpikeTrain train;
  train.kind = EncoderKind::mw;
  train.initial = signal(0);
  train.threshold = threshold;
  train.values = Tensor({n});
  for (int t = 0; t < n; ++t) {
    double base;
    if (t == 0) {
      base = signal(0);
    } else {
      const int lo = std::max(0, t - window);
      double s = 0.0;
      for (int u = lo; u < t; ++u) s += signal(u);
      base = s / (t - lo);
    }
    if (signal(t) > base + threshold)
      train.values(t) = 1.0;
    else if (signal(t) < base - threshold)
      train.values(t) = -1.0;
  }
  return train;
}

Tensor decode_sf(const SpikeTrain& train) {
  if (train.kind != EncoderKind::sf || train.threshold <= 0.0)
    throw std::invalid_argument(
        "decode_sf needs the step-forward metadata of an encode_sf train");
  Tensor out = train.values;
  double level = train.initial;
  for (int t = 0; t < out.dim(0); ++t) {
    level += train.threshold * train.values(t);
    out(t) = level;
  }
  return out;
}

double sparsity(const Tensor& values) {
  if (values.size() == 0) return 0.0;
  std::int64_t nonzero = 0;
  for (double v : values.values())
    if (v != 0.0) ++nonzero;
  return static_cast<double>(nonzero) / static_cast<double>(values.size());
}

double sparsity(const SpikeTrain& train) { return sparsity(train.values); }

Dataset encode_dataset(const Dataset& sequences, const EncoderConfig& enc,
                       RailMode rails) {
  enc.validate();
  if (!sequences.sequential())
    throw std::invalid_argument("encode_dataset expects [N x T x D] sequences");
  const int n = sequences.size();
  const int steps = sequences.inputs.dim(1);
  const int dims = sequences.inputs.dim(2);
  const int out_dims = rails == RailMode::two_rail ? 2 * dims : dims;

  Dataset out;
  out.labels = sequences.labels;
  out.class_count = sequences.class_count;
  out.inputs = Tensor({n, steps, out_dims});
  Tensor channel({steps});
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < dims; ++c) {
      for (int t = 0; t < steps; ++t) channel(t) = sequences.inputs(i, t, c);
      SpikeTrain train;
      switch (enc.kind) {
        case EncoderKind::tc: train = encode_tc(channel, enc.factor); break;
        case EncoderKind::sf: train = encode_sf(channel, enc.threshold); break;
        case EncoderKind::mw:
          train = encode_mw(channel, enc.threshold, enc.window);
          break;
      }
      for (int t = 0; t < steps; ++t) {
        const double v = train.values(t);
        if (rails == RailMode::two_rail) {
          out.inputs(i, t, 2 * c) = v > 0.0 ? 1.0 : 0.0;
          out.inputs(i, t, 2 * c + 1) = v < 0.0 ? 1.0 : 0.0;
        } else {
          out.inputs(i, t, c) = v;
        }
      }
    }
  }
  return out;
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "tc") return EncoderKind::tc;
  if (s == "sf") return EncoderKind::sf;
  if (s == "mw") return EncoderKind::mw;
  throw std::invalid_argument("unknown encoder '" + s + "' (valid: tc, sf, mw)");
}

RailMode rail_mode_from_string(const std::string& s) {
  if (s == "two") return RailMode::two_rail;
  if (s == "signed") return RailMode::signed_rail;
  throw std::invalid_argument("unknown rail mode '" + s +
                              "' (valid: two, signed)");
}

}  // namespace spikekit
