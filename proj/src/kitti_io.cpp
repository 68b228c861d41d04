#include "ffnet/kitti_io.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ffnet/error.hpp"
#include "ffnet/nn_core.hpp"

namespace ffnet {
namespace {

constexpr std::array<const char*, 16> kFieldNames{
    "type",   "truncated", "occluded", "alpha", "bbox_left", "bbox_top",
    "bbox_right", "bbox_bottom", "height", "width", "length", "x",
    "y",      "z",         "rotation_y", "score"};

double number_field(const std::vector<std::string>& tok, std::size_t i, std::size_t line) {
  double v = 0.0;
  try {
    v = nn::parse_double(tok[i], kFieldNames[i]);
  } catch (const ValidationError&) {
    throw ParseError(line, "field '" + std::string(kFieldNames[i]) + "' is not numeric: '" +
                               tok[i] + "'");
  }
  if (!std::isfinite(v)) {
    throw ParseError(line, "field '" + std::string(kFieldNames[i]) + "' is not finite");
  }
  return v;
}

double wrapped(double angle, std::size_t& counter) {
  if (angle > -kPi && angle <= kPi) return angle;
  ++counter;
  return wrap_angle(angle);
}

ObjectLabel parse_line(const std::vector<std::string>& tok, std::size_t line,
                       std::size_t& wrapped_count) {
  if (tok.size() != 15 && tok.size() != 16) {
    throw ParseError(line, "expected 15 or 16 fields, found " + std::to_string(tok.size()));
  }
  ObjectLabel l;
  l.class_name = tok[0];
  l.truncation = number_field(tok, 1, line);
  const double occ = number_field(tok, 2, line);
  std::size_t wraps = 0;
  l.alpha = wrapped(number_field(tok, 3, line), wraps);
  l.box2d = {number_field(tok, 4, line), number_field(tok, 5, line), number_field(tok, 6, line),
             number_field(tok, 7, line)};
  l.dims3d = {number_field(tok, 8, line), number_field(tok, 9, line), number_field(tok, 10, line)};
  l.location = {number_field(tok, 11, line), number_field(tok, 12, line),
                number_field(tok, 13, line)};
  l.rotation_y = wrapped(number_field(tok, 14, line), wraps);
  if (tok.size() == 16) l.score = number_field(tok, 15, line);

  const bool dont_care = l.is_dont_care();
  if (!dont_care) wrapped_count += wraps;
  // DontCare rows in the benchmark carry sentinel values (-1 truncation and occlusion,
  // -10 angles); their angles are wrapped without counting.
  if (occ != std::floor(occ) || occ > 3 || occ < (dont_care ? -1 : 0)) {
    throw ParseError(line, "field 'occluded' must be an integer in {0,1,2,3}");
  }
  l.occlusion = static_cast<int>(occ);
  if (!dont_care && (l.truncation < 0.0 || l.truncation > 1.0)) {
    throw ParseError(line, "field 'truncated' must lie in [0, 1]");
  }
  if (!(l.box2d.right > l.box2d.left) || !(l.box2d.bottom > l.box2d.top)) {
    throw ParseError(line, "2D box must satisfy right > left and bottom > top");
  }
  if (!dont_care && !(l.dims3d.h1 > 0.0 && l.dims3d.w1 > 0.0 && l.dims3d.l1 > 0.0)) {
    throw ParseError(line, "3D dimensions must be positive");
  }
  return l;
}

}  // namespace

LabelFile parse_label_file(std::istream& in) {
  LabelFile out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::istringstream ss(raw);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(std::move(t));
    if (tok.empty()) continue;
    out.labels.push_back(parse_line(tok, line, out.wrapped_angles));
  }
  return out;
}

LabelFile parse_label_text(std::string_view text) {
  std::istringstream ss{std::string(text)};
  return parse_label_file(ss);
}

LabelFile read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open label file '" + path + "'");
  return parse_label_file(in);
}

std::string format_label(const ObjectLabel& l) {
  using nn::format_double;
  std::string s = l.class_name;
  auto add = [&](double v) {
    s += ' ';
    s += format_double(v);
  };
  add(l.truncation);
  s += ' ';
  s += std::to_string(l.occlusion);
  add(l.alpha);
  add(l.box2d.left);
  add(l.box2d.top);
  add(l.box2d.right);
  add(l.box2d.bottom);
  add(l.dims3d.h1);
  add(l.dims3d.w1);
  add(l.dims3d.l1);
  add(l.location.x);
  add(l.location.y);
  add(l.location.z);
  add(l.rotation_y);
  if (l.score) add(*l.score);
  return s;
}

void write_label_file(std::ostream& out, const std::vector<ObjectLabel>& labels) {
  for (const auto& l : labels) out << format_label(l) << '\n';
}

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy:
      return "easy";
    case Difficulty::Moderate:
      return "moderate";
    case Difficulty::Hard:
      return "hard";
    case Difficulty::Ignored:
      return "ignored";
  }
  return "ignored";
}

Difficulty classify_difficulty(const ObjectLabel& label) {
  const double h = label.box2d.height();
  if (h >= 40.0 && label.occlusion == 0 && label.truncation <= 0.15) return Difficulty::Easy;
  if (h >= 25.0 && label.occlusion <= 1 && label.truncation <= 0.30) return Difficulty::Moderate;
  if (h >= 25.0 && label.occlusion <= 2 && label.truncation <= 0.50) return Difficulty::Hard;
  return Difficulty::Ignored;
}

TrainingSample to_sample(const ObjectLabel& label, OrientationSource source,
                         std::size_t context_width) {
  if (label.class_name != "Pedestrian") {
    throw ValidationError("to_sample: expected class 'Pedestrian', got '" + label.class_name + "'");
  }
  TrainingSample s;
  s.dims2d = {label.box2d.bottom - label.box2d.top, label.box2d.right - label.box2d.left};
  validate(s.dims2d);
  s.dims3d = label.dims3d;
  validate(s.dims3d);
  s.theta = Orientation(source == OrientationSource::Alpha ? label.alpha : label.rotation_y);
  s.context.assign(context_width, 0.0);
  return s;
}

}  // namespace ffnet
