#include "ffnet/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ffnet/error.hpp"

namespace ffnet {
namespace {

constexpr double kHalfPi = kPi / 2.0;
constexpr double kDedupTol = 1e-9;
constexpr double kIntervalSlack = 1e-12;

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

// a sin(theta) + b cos(theta) on [lo, hi).
struct QuadrantCase {
  double a;
  double b;
  double lo;
  double hi;
};

}  // namespace

void validate(const Dims2D& d) {
  if (!positive_finite(d.h) || !positive_finite(d.w)) {
    throw ValidationError("2D dimensions must be finite and positive (h=" + std::to_string(d.h) +
                          ", w=" + std::to_string(d.w) + ")");
  }
}

void validate(const Dims3D& d) {
  if (!positive_finite(d.h1) || !positive_finite(d.w1) || !positive_finite(d.l1)) {
    throw ValidationError("3D dimensions must be finite and positive (h1=" + std::to_string(d.h1) +
                          ", w1=" + std::to_string(d.w1) + ", l1=" + std::to_string(d.l1) + ")");
  }
}

WidthSpan width_span(const Dims3D& dims, Orientation theta) {
  double t = theta.radians();
  if (t == kPi) t = -kPi;
  const double s = std::sin(t);
  const double c = std::cos(t);
  double span = 0.0;
  if (t >= 0.0 && t < kHalfPi) {
    span = dims.w1 * s + dims.l1 * c;
  } else if (t >= kHalfPi) {
    span = dims.w1 * s - dims.l1 * c;
  } else if (t >= -kHalfPi) {
    span = dims.l1 * c - dims.w1 * s;
  } else {
    span = -dims.l1 * c - dims.w1 * s;
  }
  return {span};
}

WidthSpan width_span_abs(const Dims3D& dims, Orientation theta) {
  const double t = theta.radians();
  return {dims.w1 * std::abs(std::sin(t)) + dims.l1 * std::abs(std::cos(t))};
}

WidthSpan implied_width_span(const Dims2D& d2, double h1) {
  if (!(d2.h > 0.0)) throw ValidationError("implied_width_span: box height must be positive");
  return {h1 * d2.w / d2.h};
}

double consistency_residual(const Dims2D& d2, const Dims3D& dims, Orientation theta) {
  return d2.h * width_span_abs(dims, theta).meters - d2.w * dims.h1;
}

double max_width_span(const Dims3D& dims) { return std::hypot(dims.w1, dims.l1); }

InversionResult invert_orientation_candidates(const Dims2D& d2, const Dims3D& dims) {
  validate(d2);
  validate(dims);

  InversionResult out;
  out.target = implied_width_span(d2, dims.h1).meters;
  const double amplitude = max_width_span(dims);
  if (out.target > amplitude * (1.0 + 1e-9)) {
    out.infeasible = true;
    out.exceeds_max_span = true;
    return out;
  }

  const std::array<QuadrantCase, 4> cases{{
      {dims.w1, dims.l1, 0.0, kHalfPi},
      {dims.w1, -dims.l1, kHalfPi, kPi},
      {-dims.w1, dims.l1, -kHalfPi, 0.0},
      {-dims.w1, -dims.l1, -kPi, -kHalfPi},
  }};

  const double ratio = std::clamp(out.target / amplitude, -1.0, 1.0);
  const double base = std::asin(ratio);

  std::vector<double> roots;
  for (const auto& qc : cases) {
    // a sin t + b cos t = R sin(t + phase)
    const double phase = std::atan2(qc.b, qc.a);
    for (double r : {base - phase, kPi - base - phase}) {
      for (int k = -2; k <= 2; ++k) {
        const double t = r + k * kTwoPi;
        if (t >= qc.lo - kIntervalSlack && t < qc.hi + kIntervalSlack) {
          double clamped = std::clamp(t, qc.lo, qc.hi);
          if (clamped <= -kPi + kIntervalSlack) clamped = kPi;
          roots.push_back(clamped);
        }
      }
    }
  }

  std::sort(roots.begin(), roots.end());
  for (double r : roots) {
    const bool duplicate = std::any_of(out.candidates.begin(), out.candidates.end(),
                                       [&](Orientation c) {
                                         return circular_distance(c.radians(), r) < kDedupTol;
                                       });
    if (!duplicate) out.candidates.emplace_back(r);
  }
  out.infeasible = out.candidates.empty();
  return out;
}

}  // namespace ffnet
