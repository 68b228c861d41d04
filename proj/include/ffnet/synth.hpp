#pragma once

// Synthetic pedestrians that obey the width-span / aspect-ratio relation, plus a grid
// oracle for the yaw candidates of a (2D, 3D) dimension pair.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ffnet/angles.hpp"
#include "ffnet/config.hpp"
#include "ffnet/geometry.hpp"
#include "ffnet/kitti_io.hpp"

namespace ffnet {

struct TruncatedNormal {
  double mean = 0.0;
  double sd = 1.0;
  double lo = 0.0;
  double hi = 1.0;
};

struct SynthConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  TruncatedNormal h1{1.7, 0.1, 1.4, 2.0};
  TruncatedNormal w1{0.6, 0.1, 0.3, 0.9};
  TruncatedNormal l1{0.5, 0.15, 0.2, 0.9};
  double scale_lo = 30.0;  // pixels per meter
  double scale_hi = 120.0;
  double box_noise_sd = 0.0;  // pixels
  double theta_lo = -kPi;     // theta drawn from (theta_lo, theta_hi]
  double theta_hi = kPi;
  /// Corruption of the orientation cues in the context vector, in [0, 1].
  double context_noise = 0.5;
  /// Noise (in standard deviations) on the dimension cues in the context vector.
  double context_dims_noise = 0.1;
  std::size_t context_width = 16;
  std::size_t context_bins = 4;
  std::size_t num_threads = 1;

  /// Throws ValidationError on non-positive sds, empty ranges, or a context too narrow for
  /// its cue layout.
  void validate() const;
  static SynthConfig from_config(const Config& cfg, const std::string& section = "synth");
};

/// Noise-free quantities behind a generated sample.
struct SampleTruth {
  double scale = 0.0;       // pixels per meter
  double width_span = 0.0;  // meters
  Dims2D clean_dims2d;
};

struct SynthDataset {
  std::vector<TrainingSample> samples;
  std::vector<SampleTruth> truth;
};

/// Context vector layout for width W and C context bins:
///   [0, C)         one-hot of the yaw bin; replaced by a random other bin with
///                  probability context_noise
///   [C, C+2)       (1 - context_noise) (sin, cos) + N(0, (0.2 context_noise)^2)
///   [C+2, C+5)     standardised (h1, w1, l1) + N(0, context_dims_noise^2)
///   [C+5, W)       N(0, 1) distractors
/// Every sample draws from its own stream seeded by (seed, index), so the output does not
/// depend on num_threads.
SynthDataset gen_dataset(const SynthConfig& cfg);

/// One context vector with the gen_dataset layout for a given box and yaw.
std::vector<double> make_context(const SynthConfig& cfg, const Dims3D& dims, Orientation theta,
                                 std::uint64_t seed);

/// Dataset file: header comment, then one sample per line with columns
/// h w h1 w1 l1 theta c0 c1 ... (radians, shortest round-trip decimals).
void write_dataset(std::ostream& out, const std::vector<TrainingSample>& samples);
std::vector<TrainingSample> read_dataset(std::istream& in);
std::vector<TrainingSample> read_dataset_file(const std::string& path);

void write_truth(std::ostream& out, const std::vector<SampleTruth>& truth);

/// Scans theta over (-pi, pi] at `grid_step`, keeps circular local minima of
/// |width_span(theta) - implied_width_span| below sqrt(w1^2 + l1^2) * grid_step, merges
/// adjacent hits and returns cluster centers.
std::vector<Orientation> brute_force_orientation_oracle(const Dims2D& d2, const Dims3D& dims,
                                                        double grid_step);

}  // namespace ffnet
