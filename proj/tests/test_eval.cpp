#include <cmath>
#include <random>

#include "doctest.h"
#include "ffnet/error.hpp"
#include "ffnet/eval.hpp"

using namespace ffnet;

namespace {

Box2D box(double l, double t, double w, double h) { return {l, t, l + w, t + h}; }

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("orientation similarity") {
    CHECK(orientation_similarity(0.3, 0.3) == 1.0);
    CHECK(orientation_similarity(0.0, kPi) == 0.0);
    CHECK(orientation_similarity(kPi / 2, 0.0) == doctest::Approx(0.5));
    CHECK(orientation_similarity(1.0, -2.0) == orientation_similarity(-2.0, 1.0));
    CHECK(orientation_similarity(deg_to_rad(179), deg_to_rad(-179)) ==
          doctest::Approx((1 + std::cos(deg_to_rad(2))) / 2));
  }

  TEST_CASE("iou") {
    CHECK(iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == 1.0);
    CHECK(iou(box(0, 0, 10, 10), box(20, 20, 5, 5)) == 0.0);
    CHECK(iou(box(0, 0, 10, 10), box(5, 0, 10, 10)) == doctest::Approx(50.0 / 150.0));
  }

  TEST_CASE("greedy matching") {
    const std::vector<GroundTruth> gts{{box(0, 0, 10, 20), 0.0}};
    const std::vector<Detection> dets{{box(0, 0, 10, 20), 0.4, 0.0}, {box(1, 0, 10, 20), 0.9, 0.0},
                                      {box(100, 0, 10, 20), 0.5, 0.0}};
    const MatchResult m = match_detections(dets, gts, 0.5);
    REQUIRE(m.matches.size() == 1);
    CHECK(m.matches[0].det == 1);
    CHECK(m.unmatched_dets == std::vector<std::size_t>{2, 0});
    CHECK(m.unmatched_gts.empty());
  }

  TEST_CASE("ignored ground truths and DontCare regions absorb detections") {
    const std::vector<GroundTruth> gts{{box(0, 0, 10, 20), 0.0, true}};
    const std::vector<Detection> dets{{box(0, 0, 10, 20), 0.9, 0.0}, {box(52, 2, 6, 10), 0.8, 0.0},
                                      {box(200, 0, 10, 10), 0.7, 0.0}};
    const MatchResult m = match_detections(dets, gts, 0.5, {box(50, 0, 20, 20)});
    CHECK(m.matches.empty());
    CHECK(m.ignored_dets.size() == 2);
    CHECK(m.unmatched_dets == std::vector<std::size_t>{2});
  }

  TEST_CASE("AOS trivial cases") {
    std::vector<GroundTruth> gts;
    std::vector<Detection> perfect;
    std::vector<Detection> flipped;
    for (int i = 0; i < 10; ++i) {
      const double t = -2.5 + 0.5 * i;
      gts.push_back({box(30.0 * i, 0, 20, 40), t});
      perfect.push_back({box(30.0 * i, 0, 20, 40), 0.1 * i + 0.05, t});
      flipped.push_back({box(30.0 * i, 0, 20, 40), 0.1 * i + 0.05, wrap_angle(t + kPi)});
    }
    const AosResult p = aos(perfect, gts);
    CHECK(p.aos == doctest::Approx(1.0));
    CHECK(p.ap == doctest::Approx(1.0));
    CHECK(aos(flipped, gts).aos == doctest::Approx(0.0).epsilon(1e-15));

    const AosResult half = aos({{box(0, 0, 10, 10), 1.0, kPi / 2}}, {{box(0, 0, 10, 10), 0.0}});
    CHECK(half.aos == 0.5);
    CHECK(half.ap == 1.0);
    CHECK_THROWS_AS(aos(perfect, {}), ValidationError);
  }

  TEST_CASE("hand-computed partial recall") {
    // Two gts, one matched detection with score 0.9 and one FP at 0.5:
    // curve points (r 0.5, p 1), (r 0.5, p 0.5); 11-point AP = 6/11 * 1.
    const std::vector<GroundTruth> gts{{box(0, 0, 10, 10), 0.0}, {box(50, 0, 10, 10), 0.0}};
    const std::vector<Detection> dets{{box(0, 0, 10, 10), 0.9, 0.0}, {box(200, 0, 10, 10), 0.5, 0.0}};
    const AosResult r = aos(dets, gts);
    CHECK(r.ap == doctest::Approx(6.0 / 11.0));
    CHECK(r.aos == doctest::Approx(6.0 / 11.0));
    REQUIRE(r.curve.size() == 2);
    CHECK(r.curve[1].precision == 0.5);
    CHECK(r.true_positives == 1);
    CHECK(r.false_positives == 1);
  }

  TEST_CASE("AOS <= AP and score-rescaling invariance") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Frame> frames(3);
      for (auto& f : frames) {
        const int ng = 1 + static_cast<int>(rng() % 5);
        for (int g = 0; g < ng; ++g) {
          f.ground_truth.push_back({box(60.0 * g, 0, 20, 40), wrap_angle(7 * u(rng))});
          if (u(rng) < 0.8) {
            f.detections.push_back({box(60.0 * g + 10 * u(rng), 5 * u(rng), 20, 40), u(rng),
                                    wrap_angle(7 * u(rng))});
          }
        }
        for (int k = 0; k < 2; ++k) f.detections.push_back({box(1000 * u(rng), 400, 20, 40), u(rng), 0.0});
      }
      const AosResult r = aos(frames);
      CHECK(r.aos <= r.ap + 1e-12);
      auto rescaled = frames;
      for (auto& f : rescaled) {
        for (auto& d : f.detections) d.score = std::exp(3 * d.score) - 7;
      }
      CHECK(aos(rescaled).aos == r.aos);
    }
  }

  TEST_CASE("error histogram") {
    const std::vector<std::pair<double, double>> perfect{{0.1, 0.1}, {-2, -2}};
    const auto h = error_histogram(perfect);
    REQUIRE(h.size() == 18);
    CHECK(h[0] == 2);
    const auto worst = error_histogram({{0.0, kPi}, {kPi / 2, -kPi / 2}});
    CHECK(worst[17] == 2);

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-kPi, kPi);
    std::vector<std::pair<double, double>> random;
    for (int i = 0; i < 20000; ++i) random.emplace_back(u(rng), u(rng));
    const auto r = error_histogram(random);
    std::size_t total = 0;
    for (auto c : r) {
      CHECK(c > 0);
      total += c;
    }
    CHECK(total == random.size());
    CHECK(mean_abs_angular_error_deg({{0.0, deg_to_rad(10)}, {0.0, deg_to_rad(-30)}}) == doctest::Approx(20));
  }

  TEST_CASE("report histogram sums to matched pairs") {
    std::vector<GroundTruth> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 6; ++i) {
      gts.push_back({box(30.0 * i, 0, 20, 40), 0.2 * i});
      dets.push_back({box(30.0 * i, 0, 20, 40), 0.5, 0.3 * i});
    }
    dets.push_back({box(900, 0, 20, 40), 0.2, 0.0});
    const EvalReport r = make_report("x", aos(dets, gts));
    std::size_t total = 0;
    for (auto c : r.histogram) total += c;
    CHECK(total == r.result.matched_angles.size());
    CHECK(total == 6);
  }
}
