#pragma once

// KITTI object label / detection text format.
//
// One object per line, whitespace separated, in this order:
//
//   type truncated occluded alpha left top right bottom height width length x y z rotation_y [score]
//
// 15 fields for ground-truth labels, 16 for detections (trailing confidence score).
// Dimensions are meters (height, width, length), location is the camera frame, angles
// are radians.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ffnet/angles.hpp"
#include "ffnet/geometry.hpp"

namespace ffnet {

struct Box2D {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const noexcept { return right - left; }
  double height() const noexcept { return bottom - top; }
  double area() const noexcept { return width() * height(); }
  friend bool operator==(const Box2D&, const Box2D&) = default;
};

struct Location3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Location3D&, const Location3D&) = default;
};

struct ObjectLabel {
  std::string class_name;
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  Box2D box2d;
  Dims3D dims3d;
  Location3D location;
  double rotation_y = 0.0;
  std::optional<double> score;

  bool is_dont_care() const noexcept { return class_name == "DontCare"; }
  friend bool operator==(const ObjectLabel&, const ObjectLabel&) = default;
};

struct LabelFile {
  std::vector<ObjectLabel> labels;
  /// Number of alpha / rotation_y values that had to be wrapped into (-pi, pi].
  std::size_t wrapped_angles = 0;
};

/// Parses a label or detection file. Blank lines are skipped. Throws ParseError carrying
/// the 1-based line number on a wrong field count, non-numeric field, or invariant violation.
LabelFile parse_label_file(std::istream& in);
LabelFile parse_label_text(std::string_view text);
LabelFile read_label_file(const std::string& path);

/// Serialises labels in the same field order; values round-trip exactly through the parser.
void write_label_file(std::ostream& out, const std::vector<ObjectLabel>& labels);
std::string format_label(const ObjectLabel& label);

enum class Difficulty { Easy, Moderate, Hard, Ignored };

const char* to_string(Difficulty d);

/// KITTI tiers: Easy (height >= 40 px, occlusion 0, truncation <= 0.15), Moderate
/// (>= 25 px, occlusion <= 1, truncation <= 0.30), Hard (>= 25 px, occlusion <= 2,
/// truncation <= 0.50). Anything else is Ignored.
Difficulty classify_difficulty(const ObjectLabel& label);

enum class OrientationSource { RotationY, Alpha };

/// Training/evaluation sample: measured box, metric box, yaw and a context vector that
/// stands in for image features.
struct TrainingSample {
  Dims2D dims2d;
  Dims3D dims3d;
  Orientation theta;
  std::vector<double> context;
};

/// Converts a pedestrian label. dims2d = (bottom - top, right - left); theta from
/// rotation_y unless `source` is Alpha; context zero-filled to `context_width`.
/// Throws ValidationError for other classes or degenerate boxes/dimensions.
TrainingSample to_sample(const ObjectLabel& label, OrientationSource source,
                         std::size_t context_width);

}  // namespace ffnet
