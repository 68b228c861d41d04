#pragma once

// Multi-bin sin/cos orientation representation.
//
// Each bin predicts the residual between the yaw and its own center as a (sin, cos) pair.
// After adding the offsets back, all bins should agree; a voting rule discards a single
// bin that contradicts an otherwise consistent consensus.

#include <cstddef>
#include <set>
#include <vector>

#include "ffnet/angles.hpp"

namespace ffnet {

struct SinCos {
  double sin_value = 0.0;
  double cos_value = 0.0;
  bool degenerate() const noexcept { return sin_value == 0.0 && cos_value == 0.0; }
};

using BinOutputs = std::vector<SinCos>;
using BinSet = std::set<std::size_t>;

/// Bin layout. Offsets are bin centers, strictly increasing inside (-pi, pi].
class BinConfig {
 public:
  /// Evenly partitioned (-pi, pi] with `num_bins` bins.
  explicit BinConfig(std::size_t num_bins = 4);
  /// Custom centers; throws ValidationError if not strictly increasing or out of range.
  explicit BinConfig(std::vector<double> offsets);

  std::size_t num_bins() const noexcept { return offsets_.size(); }
  const std::vector<double>& offsets() const noexcept { return offsets_; }
  /// Index of the bin whose interval (center +- pi/B for the default layout) holds `theta`.
  std::size_t bin_of(Orientation theta) const;

 private:
  std::vector<double> offsets_;
};

/// Centers of an even partition of (-pi, pi]: -pi + (2i + 1) pi / B.
std::vector<double> default_offsets(std::size_t num_bins);

/// Quadrant-corrected arctangent of sin/cos; cos = 0 maps to +-pi/2 by the sign of sin.
/// Throws DegenerateError on (0, 0).
double decode_angle(double sin_value, double cos_value);

/// Per-bin residual targets (sin(theta - offset_i), cos(theta - offset_i)).
BinOutputs encode_targets(Orientation theta, const BinConfig& cfg);

/// wrap(decode(out_i) + offset_i) for each bin.
std::vector<double> per_bin_global_angles(const BinOutputs& out, const BinConfig& cfg);

/// Per-bin loss 1 - sin(t)sin(p) - cos(t)cos(p) on the L2-normalised prediction;
/// equals 1 - cos(error) and lies in [0, 2].
double bin_loss(const SinCos& prediction, const SinCos& target);

/// Sum of bin_loss over bins not in `excluded`.
double orientation_loss(const BinOutputs& out, Orientation theta_truth, const BinConfig& cfg,
                        const BinSet& excluded);

/// Bin j is excluded when (a) it is farther than `tau` from every other bin and (b) all the
/// other bins lie pairwise within `tau`. When every bin qualifies (only possible for B = 2)
/// nothing is excluded, since no consensus exists.
BinSet exclusion_vote(const std::vector<double>& angles, double tau);

/// Exclusion threshold used by default, 15 degrees.
inline constexpr double kDefaultExclusionTau = 15.0 * kPi / 180.0;

/// Circular mean of the non-excluded angles. Throws DegenerateError when every bin is
/// excluded or the surviving unit vectors cancel.
Orientation aggregate_orientation(const std::vector<double>& angles, const BinSet& excluded);

/// Classic two-stage decode: argmax-confidence bin (lowest index on ties), plus its residual.
Orientation multibin_baseline_decode(const std::vector<double>& confidences,
                                     const BinOutputs& residuals, const BinConfig& cfg);

}  // namespace ffnet
