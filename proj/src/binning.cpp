#include "ffnet/binning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ffnet/error.hpp"

namespace ffnet {

std::vector<double> default_offsets(std::size_t num_bins) {
  if (num_bins == 0) throw ValidationError("number of bins must be at least 1");
  std::vector<double> offsets(num_bins);
  const double b = static_cast<double>(num_bins);
  for (std::size_t i = 0; i < num_bins; ++i) {
    offsets[i] = -kPi + (2.0 * static_cast<double>(i) + 1.0) * kPi / b;
  }
  return offsets;
}

BinConfig::BinConfig(std::size_t num_bins) : offsets_(default_offsets(num_bins)) {}

BinConfig::BinConfig(std::vector<double> offsets) : offsets_(std::move(offsets)) {
  if (offsets_.empty()) throw ValidationError("bin configuration needs at least one bin");
  for (std::size_t i = 0; i < offsets_.size(); ++i) {
    if (!(offsets_[i] > -kPi && offsets_[i] <= kPi)) {
      throw ValidationError("bin offset " + std::to_string(i) + " outside (-pi, pi]");
    }
    if (i > 0 && !(offsets_[i] > offsets_[i - 1])) {
      throw ValidationError("bin offsets must be strictly increasing");
    }
  }
}

std::size_t BinConfig::bin_of(Orientation theta) const {
  if (offsets_ == default_offsets(offsets_.size())) {
    // Even partition into half-open intervals (-pi + 2 pi i / B, -pi + 2 pi (i + 1) / B].
    const double width = kTwoPi / static_cast<double>(offsets_.size());
    const double k = std::ceil((theta.radians() + kPi) / width) - 1.0;
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(offsets_.size() - 1)));
  }
  std::size_t best = 0;
  double best_d = circular_distance(theta.radians(), offsets_[0]);
  for (std::size_t i = 1; i < offsets_.size(); ++i) {
    const double d = circular_distance(theta.radians(), offsets_[i]);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

double decode_angle(double sin_value, double cos_value) {
  if (sin_value == 0.0 && cos_value == 0.0) {
    throw DegenerateError("cannot decode an angle from a (0, 0) sin/cos pair");
  }
  if (cos_value == 0.0) return sin_value > 0.0 ? kPi / 2.0 : -kPi / 2.0;
  const double base = std::atan(sin_value / cos_value);
  if (cos_value > 0.0) return base;
  // cos < 0: shift into the left half-plane. sin == 0 lands on pi, the closed end.
  return wrap_angle(sin_value >= 0.0 ? base + kPi : base - kPi);
}

BinOutputs encode_targets(Orientation theta, const BinConfig& cfg) {
  BinOutputs out;
  out.reserve(cfg.num_bins());
  for (double offset : cfg.offsets()) {
    const double r = theta.radians() - offset;
    out.push_back({std::sin(r), std::cos(r)});
  }
  return out;
}

std::vector<double> per_bin_global_angles(const BinOutputs& out, const BinConfig& cfg) {
  if (out.size() != cfg.num_bins()) {
    throw ValidationError("bin output count " + std::to_string(out.size()) +
                          " does not match bin configuration (" +
                          std::to_string(cfg.num_bins()) + ")");
  }
  std::vector<double> angles(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].degenerate()) {
      throw DegenerateError("bin " + std::to_string(i) + " produced a (0, 0) sin/cos pair");
    }
    angles[i] = wrap_angle(decode_angle(out[i].sin_value, out[i].cos_value) + cfg.offsets()[i]);
  }
  return angles;
}

double bin_loss(const SinCos& prediction, const SinCos& target) {
  const double norm = std::hypot(prediction.sin_value, prediction.cos_value);
  if (norm == 0.0) throw DegenerateError("orientation loss on a (0, 0) prediction");
  // 1 - st s - ct c on the unit prediction is 1 - cos(d) = 2 sin^2(d / 2), where d is the
  // angle between the two vectors. The half-angle form is exact at d = 0 and d = pi.
  const double cross = target.sin_value * prediction.cos_value - target.cos_value * prediction.sin_value;
  const double dot = target.sin_value * prediction.sin_value + target.cos_value * prediction.cos_value;
  const double half = std::sin(0.5 * std::atan2(cross, dot));
  return 2.0 * half * half;
}

double orientation_loss(const BinOutputs& out, Orientation theta_truth, const BinConfig& cfg,
                        const BinSet& excluded) {
  if (out.size() != cfg.num_bins()) {
    throw ValidationError("bin output count does not match bin configuration");
  }
  if (excluded.size() >= out.size()) {
    throw ValidationError("orientation loss with every bin excluded");
  }
  const BinOutputs targets = encode_targets(theta_truth, cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (excluded.contains(i)) continue;
    total += bin_loss(out[i], targets[i]);
  }
  return total;
}

BinSet exclusion_vote(const std::vector<double>& angles, double tau) {
  BinSet excluded;
  const std::size_t n = angles.size();
  if (n < 2) return excluded;
  for (std::size_t j = 0; j < n; ++j) {
    bool isolated = true;
    for (std::size_t k = 0; k < n && isolated; ++k) {
      if (k != j && !(circular_distance(angles[j], angles[k]) > tau)) isolated = false;
    }
    if (!isolated) continue;
    bool consensus = true;
    for (std::size_t a = 0; a < n && consensus; ++a) {
      if (a == j) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (b == j) continue;
        if (!(circular_distance(angles[a], angles[b]) < tau)) {
          consensus = false;
          break;
        }
      }
    }
    if (consensus) excluded.insert(j);
  }
  if (excluded.size() == n) excluded.clear();
  return excluded;
}

Orientation aggregate_orientation(const std::vector<double>& angles, const BinSet& excluded) {
  double s = 0.0;
  double c = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    if (excluded.contains(i)) continue;
    s += std::sin(angles[i]);
    c += std::cos(angles[i]);
    ++used;
  }
  if (used == 0) throw DegenerateError("aggregate_orientation: no surviving bins");
  if (std::hypot(s, c) < 1e-12 * static_cast<double>(used)) {
    throw DegenerateError("aggregate_orientation: surviving bins cancel out");
  }
  return Orientation(std::atan2(s, c));
}

Orientation multibin_baseline_decode(const std::vector<double>& confidences,
                                     const BinOutputs& residuals, const BinConfig& cfg) {
  if (confidences.empty()) throw ValidationError("multibin decode needs at least one confidence");
  if (confidences.size() != cfg.num_bins() || residuals.size() != cfg.num_bins()) {
    throw ValidationError("multibin decode: confidence/residual count does not match bins");
  }
  // max_element returns the first maximum, which gives the lowest-index tie-break.
  const auto best = static_cast<std::size_t>(
      std::max_element(confidences.begin(), confidences.end()) - confidences.begin());
  const SinCos& r = residuals[best];
  return Orientation(decode_angle(r.sin_value, r.cos_value) + cfg.offsets()[best]);
}

}  // namespace ffnet
