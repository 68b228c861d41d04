#include <cmath>

#include "doctest.h"
#include "ffnet/angles.hpp"

using namespace ffnet;

TEST_SUITE("angles") {
  TEST_CASE("wrap keeps the half-open range") {
    CHECK(wrap_angle(kPi) == kPi);
    CHECK(wrap_angle(-kPi) == kPi);
    CHECK(wrap_angle(0.25) == 0.25);
    CHECK(wrap_angle(3 * kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(-3 * kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(kTwoPi + 0.5) == doctest::Approx(0.5));
    CHECK(wrap_angle(-kTwoPi - 0.5) == doctest::Approx(-0.5));
  }

  TEST_CASE("wrapped values lie in (-pi, pi]") {
    for (int k = -2000; k <= 2000; ++k) {
      const double w = wrap_angle(k * 0.0123456);
      CHECK(w > -kPi);
      CHECK(w <= kPi);
    }
  }

  TEST_CASE("circular distance takes the short way round") {
    CHECK(circular_distance(deg_to_rad(179), deg_to_rad(-179)) == doctest::Approx(deg_to_rad(2)));
    CHECK(circular_distance(0.0, kPi) == doctest::Approx(kPi));
    CHECK(circular_distance(0.3, 0.3) == 0.0);
  }

  TEST_CASE("orientation construction wraps") {
    CHECK(Orientation(-kPi).radians() == kPi);
    CHECK(Orientation::from_degrees(-127.26).degrees() == doctest::Approx(-127.26));
    CHECK(Orientation::from_degrees(540).degrees() == doctest::Approx(180));
  }
}
