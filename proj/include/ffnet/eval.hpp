#pragma once

// Orientation-aware detection metrics: orientation similarity, greedy IoU matching,
// 11-point interpolated AOS / AP, OS-recall curves and angular error histograms.

#include <cstddef>
#include <string>
#include <vector>

#include "ffnet/kitti_io.hpp"

namespace ffnet {

struct Detection {
  Box2D box;
  double score = 0.0;
  double theta = 0.0;
};

struct GroundTruth {
  Box2D box;
  double theta = 0.0;
  /// Present but not counted: a detection matched to it is neither TP nor FP.
  bool ignored = false;
};

/// (1 + cos(delta)) / 2 with delta the shortest-arc difference.
double orientation_similarity(double theta_pred, double theta_true);

/// Intersection area over union area; 0 for disjoint boxes.
double iou(const Box2D& a, const Box2D& b);

struct Match {
  std::size_t det = 0;
  std::size_t gt = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<Match> matches;               // true positives, in descending detection score
  std::vector<std::size_t> unmatched_dets;  // false positives
  std::vector<std::size_t> unmatched_gts;   // missed (non-ignored) ground truths
  std::vector<std::size_t> ignored_dets;    // matched to an ignored gt or inside a DontCare
};

/// Greedy matching by descending score: each detection takes the unmatched ground truth
/// with the highest IoU >= iou_threshold (lowest index on ties). Ties in score keep input
/// order. `dont_care` boxes absorb otherwise unmatched detections whose area lies at least
/// half inside them.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_threshold,
                             const std::vector<Box2D>& dont_care = {});

struct Frame {
  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truth;
  std::vector<Box2D> dont_care;
};

struct CurvePoint {
  double score = 0.0;  // threshold: detections with score >= this are kept
  double recall = 0.0;
  double precision = 0.0;
  double os = 0.0;  // cumulative orientation similarity / (TP + FP)
};

struct AosResult {
  double aos = 0.0;
  double ap = 0.0;
  std::vector<CurvePoint> curve;  // one point per distinct score, descending score
  std::size_t num_gt = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  /// (theta_pred, theta_true) of every true positive.
  std::vector<std::pair<double, double>> matched_angles;
};

/// 11-point interpolated AOS and AP over frames. Throws ValidationError when no
/// non-ignored ground truth exists.
AosResult aos(const std::vector<Frame>& frames, double iou_threshold = 0.5);
AosResult aos(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
              double iou_threshold = 0.5);

/// Absolute circular errors in degrees, binned over [0, 180] at `bin_width_deg`; an error
/// of exactly 180 falls in the last bin.
std::vector<std::size_t> error_histogram(const std::vector<std::pair<double, double>>& pairs,
                                         double bin_width_deg = 10.0);

double mean_abs_angular_error_deg(const std::vector<std::pair<double, double>>& pairs);

struct EvalReport {
  std::string label;
  AosResult result;
  std::vector<std::size_t> histogram;
  double mean_abs_angular_error = 0.0;  // degrees
};

EvalReport make_report(std::string label, AosResult result, double bin_width_deg = 10.0);

}  // namespace ffnet
