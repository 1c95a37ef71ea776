#pragma once

#include <cmath>
#include <random>

#include "spikekit/tape.hpp"

namespace spikekit::testing {

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                            double stddev = 1.0) {
  return Tensor::randn(std::move(shape), rng, stddev);
}

inline double rel_l2_error(const Tensor& got, const Tensor& want) {
  double diff2 = 0.0, ref2 = 0.0;
  for (std::int64_t i = 0; i < got.size(); ++i) {
    const double d = got.data()[i] - want.data()[i];
    diff2 += d * d;
    ref2 += want.data()[i] * want.data()[i];
  }
  if (ref2 == 0.0) return std::sqrt(diff2);
  return std::sqrt(diff2 / ref2);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace spikekit::testing
