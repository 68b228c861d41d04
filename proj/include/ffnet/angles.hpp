#pragma once

#include <numbers>

namespace ffnet {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps any finite angle into (-pi, pi]. Values already in range are returned unchanged.
double wrap_angle(double radians);

/// Shortest-arc absolute difference, in [0, pi].
double circular_distance(double a, double b);

constexpr double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
constexpr double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

/// Yaw angle kept in (-pi, pi]; the constructor wraps.
class Orientation {
 public:
  constexpr Orientation() = default;
  explicit Orientation(double radians) : theta_(wrap_angle(radians)) {}

  double radians() const noexcept { return theta_; }
  double degrees() const noexcept { return rad_to_deg(theta_); }

  static Orientation from_degrees(double deg) { return Orientation(deg_to_rad(deg)); }

  friend bool operator==(const Orientation&, const Orientation&) = default;

 private:
  double theta_ = 0.0;
};

}  // namespace ffnet
