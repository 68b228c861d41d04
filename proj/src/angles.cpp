#include "ffnet/angles.hpp"

#include <cmath>

namespace ffnet {

double wrap_angle(double radians) {
  if (radians > -kPi && radians <= kPi) return radians;
  double r = std::remainder(radians, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

double circular_distance(double a, double b) {
  return std::abs(wrap_angle(a - b));
}

}  // namespace ffnet
