#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dtnet/common.hpp"
#include "dtnet/digest.hpp"

namespace dtnet::quant {

/// Scale used when the source tensor is all zeros.
inline constexpr double kZeroScaleGuard = 1e-12;

/// Ternary weights {-1, 0, +1} with one per-tensor scale.
struct TernaryTensor {
  std::vector<std::int8_t> values;
  double scale = kZeroScaleGuard;
};

/// Int8 activations in [-127, 127]. `scale` multiplies the source values.
struct QuantActivations {
  std::vector<std::int8_t> values;
  double scale = kZeroScaleGuard;
};

/// Exact running sum of doubles held as non-overlapping partials
/// (Shewchuk's expansion). round() is correctly rounded.
class ExactSum {
 public:
  void add(double x);
  double round() const;
  const std::vector<double>& partials() const { return partials_; }

 private:
  std::vector<double> partials_;
};

/// Correctly rounded arithmetic mean of |x|. Constant inputs are exact.
double mean_abs(std::span<const double> x);

/// Round half away from zero, then clamp.
TernaryTensor quantize_weights(std::span<const double> w);
QuantActivations quantize_activations(std::span<const double> x);
ParamVector dequantize(const TernaryTensor& t);

/// Digest of the serialized tensor: int8 values followed by the scale bits (LE).
Digest32 hash_tensor(const TernaryTensor& t);

}  // namespace dtnet::quant
