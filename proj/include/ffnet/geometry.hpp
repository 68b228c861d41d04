#pragma once

// Projective relation between a pedestrian's image box, its metric box and its yaw.
//
// All functions assume a rectified camera at the same height as the pedestrian, so the
// box height ratio h/h1 equals the width ratio w/w_bar where w_bar is the extent of the
// rotated footprint along the camera X axis.

#include <vector>

#include "ffnet/angles.hpp"

namespace ffnet {

/// Image-plane box size in pixels.
struct Dims2D {
  double h = 0.0;
  double w = 0.0;
  friend bool operator==(const Dims2D&, const Dims2D&) = default;
};

/// Metric box size in meters: height, width, length.
struct Dims3D {
  double h1 = 0.0;
  double w1 = 0.0;
  double l1 = 0.0;
  friend bool operator==(const Dims3D&, const Dims3D&) = default;
};

/// Footprint extent along the camera X axis, meters.
struct WidthSpan {
  double meters = 0.0;
};

/// Throws ValidationError unless both fields are finite and > 0.
void validate(const Dims2D& d);
/// Throws ValidationError unless all fields are finite and > 0.
void validate(const Dims3D& d);

/// Four-case piecewise width span. Cases are the half-open quadrants
/// [0, pi/2), [pi/2, pi), [-pi/2, 0), [-pi, -pi/2); theta = pi is evaluated as -pi.
WidthSpan width_span(const Dims3D& dims, Orientation theta);

/// w1 |sin theta| + l1 |cos theta|. Identical to width_span everywhere.
WidthSpan width_span_abs(const Dims3D& dims, Orientation theta);

/// Width span implied by the box aspect ratio: h1 * w / h.
WidthSpan implied_width_span(const Dims2D& d2, double h1);

/// h * width_span_abs(dims, theta) - w * h1, in pixel-meters. Signed.
double consistency_residual(const Dims2D& d2, const Dims3D& dims, Orientation theta);

/// Largest reachable width span, sqrt(w1^2 + l1^2).
double max_width_span(const Dims3D& dims);

struct InversionResult {
  std::vector<Orientation> candidates;  // ascending, at most 8
  double target = 0.0;                  // implied width span
  bool infeasible = false;              // no yaw reproduces the target
  bool exceeds_max_span = false;        // target above sqrt(w1^2 + l1^2)
};

/// Every yaw whose width span reproduces the span implied by (d2, h1). Solved per
/// quadrant in amplitude-phase form; roots are deduplicated within 1e-9 rad.
InversionResult invert_orientation_candidates(const Dims2D& d2, const Dims3D& dims);

}  // namespace ffnet
