#include "ffnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ffnet/angles.hpp"
#include "ffnet/error.hpp"

namespace ffnet {
namespace {

double intersection(const Box2D& a, const Box2D& b) {
  const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

struct ScoredOutcome {
  double score = 0.0;
  bool tp = false;
  double os = 0.0;
};

double interpolate_11(const std::vector<CurvePoint>& curve, double CurvePoint::*field) {
  double total = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double anchor = static_cast<double>(i) / 10.0;
    double best = 0.0;
    for (const auto& p : curve) {
      if (p.recall >= anchor - 1e-12) best = std::max(best, p.*field);
    }
    total += best;
  }
  return total / 11.0;
}

}  // namespace

double orientation_similarity(double theta_pred, double theta_true) {
  return (1.0 + std::cos(circular_distance(theta_pred, theta_true))) / 2.0;
}

double iou(const Box2D& a, const Box2D& b) {
  const double inter = intersection(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_threshold,
                             const std::vector<Box2D>& dont_care) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  MatchResult out;
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t d : order) {
    double best_iou = -1.0;
    std::size_t best = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(dets[d].box, gts[g].box);
      if (v >= iou_threshold && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < gts.size()) {
      taken[best] = 1;
      if (gts[best].ignored) {
        out.ignored_dets.push_back(d);
      } else {
        out.matches.push_back({d, best, best_iou});
      }
      continue;
    }
    const bool in_dont_care = std::any_of(dont_care.begin(), dont_care.end(), [&](const Box2D& b) {
      return dets[d].box.area() > 0.0 && intersection(dets[d].box, b) >= 0.5 * dets[d].box.area();
    });
    if (in_dont_care) {
      out.ignored_dets.push_back(d);
    } else {
      out.unmatched_dets.push_back(d);
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!taken[g] && !gts[g].ignored) out.unmatched_gts.push_back(g);
  }
  return out;
}

AosResult aos(const std::vector<Frame>& frames, double iou_threshold) {
  AosResult res;
  std::vector<ScoredOutcome> outcomes;
  for (const auto& f : frames) {
    for (const auto& g : f.ground_truth) res.num_gt += g.ignored ? 0 : 1;
    const MatchResult m = match_detections(f.detections, f.ground_truth, iou_threshold, f.dont_care);
    for (const auto& mt : m.matches) {
      const auto& d = f.detections[mt.det];
      const double truth = f.ground_truth[mt.gt].theta;
      outcomes.push_back({d.score, true, orientation_similarity(d.theta, truth)});
      res.matched_angles.emplace_back(d.theta, truth);
    }
    for (std::size_t d : m.unmatched_dets) outcomes.push_back({f.detections[d].score, false, 0.0});
  }
  if (res.num_gt == 0) throw ValidationError("aos: no ground truth objects to evaluate against");

  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });

  std::size_t tp = 0;
  std::size_t fp = 0;
  double os_sum = 0.0;
  const auto n_gt = static_cast<double>(res.num_gt);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].tp) {
      ++tp;
      os_sum += outcomes[i].os;
    } else {
      ++fp;
    }
    // A threshold keeps every detection with an equal score, so emit once per score.
    if (i + 1 < outcomes.size() && outcomes[i + 1].score == outcomes[i].score) continue;
    const auto kept = static_cast<double>(tp + fp);
    res.curve.push_back({outcomes[i].score, static_cast<double>(tp) / n_gt,
                         static_cast<double>(tp) / kept, os_sum / kept});
  }
  res.true_positives = tp;
  res.false_positives = fp;
  res.aos = interpolate_11(res.curve, &CurvePoint::os);
  res.ap = interpolate_11(res.curve, &CurvePoint::precision);
  return res;
}

AosResult aos(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
              double iou_threshold) {
  return aos(std::vector<Frame>{Frame{dets, gts, {}}}, iou_threshold);
}

std::vector<std::size_t> error_histogram(const std::vector<std::pair<double, double>>& pairs,
                                         double bin_width_deg) {
  if (!(bin_width_deg > 0.0)) throw ValidationError("histogram bin width must be positive");
  const auto bins = static_cast<std::size_t>(std::ceil(180.0 / bin_width_deg - 1e-9));
  std::vector<std::size_t> counts(bins, 0);
  for (const auto& [pred, truth] : pairs) {
    const double err = rad_to_deg(circular_distance(pred, truth));
    auto idx = static_cast<std::size_t>(std::floor(err / bin_width_deg));
    counts[std::min(idx, bins - 1)] += 1;
  }
  return counts;
}

double mean_abs_angular_error_deg(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [pred, truth] : pairs) total += rad_to_deg(circular_distance(pred, truth));
  return total / static_cast<double>(pairs.size());
}

EvalReport make_report(std::string label, AosResult result, double bin_width_deg) {
  EvalReport r;
  r.label = std::move(label);
  r.histogram = error_histogram(result.matched_angles, bin_width_deg);
  r.mean_abs_angular_error = mean_abs_angular_error_deg(result.matched_angles);
  r.result = std::move(result);
  return r;
}

}  // namespace ffnet
