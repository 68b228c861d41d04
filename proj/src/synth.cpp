#include "ffnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "ffnet/binning.hpp"
#include "ffnet/error.hpp"
#include "ffnet/nn_core.hpp"

namespace ffnet {
namespace {

constexpr std::size_t kOrientationCues = 2;
constexpr std::size_t kDimensionCues = 3;
// Standard deviation of the sin/cos cue noise per unit of context_noise.
constexpr double kAngleCueNoise = 0.2;

using Rng = std::mt19937_64;

Rng sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

double draw(const TruncatedNormal& tn, Rng& rng) {
  std::normal_distribution<double> dist(tn.mean, tn.sd);
  for (;;) {
    const double v = dist(rng);
    if (v >= tn.lo && v <= tn.hi) return v;
  }
}

void check_tn(const TruncatedNormal& tn, const char* name) {
  if (!(tn.sd > 0.0) || !(tn.hi > tn.lo) || !(tn.lo > 0.0) || tn.mean < tn.lo ||
      tn.mean > tn.hi) {
    throw ValidationError(std::string("synth: invalid distribution for ") + name);
  }
}

TruncatedNormal read_tn(const Config& cfg, const std::string& p, TruncatedNormal d) {
  return {cfg.get_double(p + "_mean", d.mean), cfg.get_double(p + "_sd", d.sd),
          cfg.get_double(p + "_min", d.lo), cfg.get_double(p + "_max", d.hi)};
}

std::vector<double> build_context(const SynthConfig& cfg, const BinConfig& bins,
                                  const Dims3D& dims, Orientation theta, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> context(cfg.context_width, 0.0);

  const std::size_t nb = cfg.context_bins;
  std::size_t bin = bins.bin_of(theta);
  if (nb > 1 && unit(rng) < cfg.context_noise) {
    std::uniform_int_distribution<std::size_t> other(0, nb - 2);
    const std::size_t pick = other(rng);
    bin = pick >= bin ? pick + 1 : pick;
  }
  context[bin] = 1.0;

  const double keep = 1.0 - cfg.context_noise;
  const double angle_sd = kAngleCueNoise * cfg.context_noise;
  context[nb] = keep * std::sin(theta.radians()) + angle_sd * gauss(rng);
  context[nb + 1] = keep * std::cos(theta.radians()) + angle_sd * gauss(rng);

  const std::size_t d0 = nb + kOrientationCues;
  context[d0] = (dims.h1 - cfg.h1.mean) / cfg.h1.sd + cfg.context_dims_noise * gauss(rng);
  context[d0 + 1] = (dims.w1 - cfg.w1.mean) / cfg.w1.sd + cfg.context_dims_noise * gauss(rng);
  context[d0 + 2] = (dims.l1 - cfg.l1.mean) / cfg.l1.sd + cfg.context_dims_noise * gauss(rng);

  for (std::size_t k = d0 + kDimensionCues; k < cfg.context_width; ++k) context[k] = gauss(rng);
  return context;
}

void generate_one(const SynthConfig& cfg, const BinConfig& bins, std::size_t i,
                  TrainingSample& sample, SampleTruth& truth) {
  Rng rng = sample_rng(cfg.seed, i);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dims3D dims{draw(cfg.h1, rng), draw(cfg.w1, rng), draw(cfg.l1, rng)};
  const Orientation theta(cfg.theta_hi - unit(rng) * (cfg.theta_hi - cfg.theta_lo));
  const double scale = cfg.scale_lo + unit(rng) * (cfg.scale_hi - cfg.scale_lo);
  const double span = width_span(dims, theta).meters;

  truth.scale = scale;
  truth.width_span = span;
  truth.clean_dims2d = {scale * dims.h1, scale * span};

  Dims2D measured = truth.clean_dims2d;
  if (cfg.box_noise_sd > 0.0) {
    std::normal_distribution<double> box_noise(0.0, cfg.box_noise_sd);
    do {
      measured.h = truth.clean_dims2d.h + box_noise(rng);
    } while (!(measured.h > 0.0));
    do {
      measured.w = truth.clean_dims2d.w + box_noise(rng);
    } while (!(measured.w > 0.0));
  }

  sample.dims2d = measured;
  sample.dims3d = dims;
  sample.theta = theta;
  sample.context = build_context(cfg, bins, dims, theta, rng);
}

}  // namespace

void SynthConfig::validate() const {
  check_tn(h1, "h1");
  check_tn(w1, "w1");
  check_tn(l1, "l1");
  if (!(scale_lo > 0.0) || !(scale_hi >= scale_lo)) {
    throw ValidationError("synth: scale range must be positive and ordered");
  }
  if (box_noise_sd < 0.0) throw ValidationError("synth: box_noise_sd must be >= 0");
  if (!(theta_hi > theta_lo) || theta_lo < -kPi || theta_hi > kPi) {
    throw ValidationError("synth: theta range must be a non-empty sub-interval of (-pi, pi]");
  }
  if (context_noise < 0.0 || context_noise > 1.0) {
    throw ValidationError("synth: context_noise must lie in [0, 1]");
  }
  if (context_dims_noise < 0.0) throw ValidationError("synth: context_dims_noise must be >= 0");
  if (context_bins == 0) throw ValidationError("synth: context_bins must be >= 1");
  if (context_width < context_bins + kOrientationCues + kDimensionCues) {
    throw ValidationError("synth: context_width must be at least context_bins + 5");
  }
  if (num_threads == 0) throw ValidationError("synth: num_threads must be >= 1");
}

SynthConfig SynthConfig::from_config(const Config& cfg, const std::string& section) {
  const std::string p = section + ".";
  SynthConfig s;
  s.n = cfg.get_uint(p + "n", s.n);
  s.seed = cfg.get_uint(p + "seed", s.seed);
  s.h1 = read_tn(cfg, p + "h1", s.h1);
  s.w1 = read_tn(cfg, p + "w1", s.w1);
  s.l1 = read_tn(cfg, p + "l1", s.l1);
  s.scale_lo = cfg.get_double(p + "scale_min", s.scale_lo);
  s.scale_hi = cfg.get_double(p + "scale_max", s.scale_hi);
  s.box_noise_sd = cfg.get_double(p + "box_noise_sd", s.box_noise_sd);
  s.theta_lo = cfg.get_double(p + "theta_min", s.theta_lo);
  s.theta_hi = cfg.get_double(p + "theta_max", s.theta_hi);
  s.context_noise = cfg.get_double(p + "context_noise", s.context_noise);
  s.context_dims_noise = cfg.get_double(p + "context_dims_noise", s.context_dims_noise);
  s.context_width = cfg.get_uint(p + "context_width", s.context_width);
  s.context_bins = cfg.get_uint(p + "context_bins", s.context_bins);
  s.num_threads = cfg.get_uint(p + "threads", s.num_threads);
  s.validate();
  return s;
}

SynthDataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds;
  ds.samples.resize(cfg.n);
  ds.truth.resize(cfg.n);
  const BinConfig bins(cfg.context_bins);

  const std::size_t threads = std::min<std::size_t>(cfg.num_threads, std::max<std::size_t>(cfg.n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < cfg.n; ++i) generate_one(cfg, bins, i, ds.samples[i], ds.truth[i]);
    return ds;
  }
  std::vector<std::jthread> workers;
  const std::size_t chunk = (cfg.n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(cfg.n, begin + chunk);
    workers.emplace_back([&, begin, end] {
      for (std::size_t i = begin; i < end; ++i) {
        generate_one(cfg, bins, i, ds.samples[i], ds.truth[i]);
      }
    });
  }
  return ds;
}

std::vector<double> make_context(const SynthConfig& cfg, const Dims3D& dims, Orientation theta,
                                 std::uint64_t seed) {
  cfg.validate();
  Rng rng = sample_rng(seed, 0xC0A7E47ULL);
  return build_context(cfg, BinConfig(cfg.context_bins), dims, theta, rng);
}

void write_dataset(std::ostream& out, const std::vector<TrainingSample>& samples) {
  using nn::format_double;
  const std::size_t width = samples.empty() ? 0 : samples.front().context.size();
  out << "# ffnet-dataset 1 context_width " << width << "\n";
  out << "# h w h1 w1 l1 theta";
  for (std::size_t k = 0; k < width; ++k) out << " c" << k;
  out << "\n";
  for (const auto& s : samples) {
    out << format_double(s.dims2d.h) << ' ' << format_double(s.dims2d.w) << ' '
        << format_double(s.dims3d.h1) << ' ' << format_double(s.dims3d.w1) << ' '
        << format_double(s.dims3d.l1) << ' ' << format_double(s.theta.radians());
    for (double c : s.context) out << ' ' << format_double(c);
    out << '\n';
  }
}

std::vector<TrainingSample> read_dataset(std::istream& in) {
  std::vector<TrainingSample> out;
  std::string raw;
  std::size_t line = 0;
  std::size_t width = 0;
  bool width_known = false;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.empty() || raw.front() == '#') continue;
    std::istringstream ss(raw);
    std::vector<double> v;
    for (std::string tok; ss >> tok;) {
      try {
        v.push_back(nn::parse_double(tok, "column " + std::to_string(v.size())));
      } catch (const ValidationError& e) {
        throw ParseError(line, e.what());
      }
    }
    if (v.empty()) continue;
    if (v.size() < 6) throw ParseError(line, "dataset rows need at least 6 columns");
    if (!width_known) {
      width = v.size() - 6;
      width_known = true;
    } else if (v.size() - 6 != width) {
      throw ParseError(line, "context width differs from earlier rows");
    }
    TrainingSample s;
    s.dims2d = {v[0], v[1]};
    s.dims3d = {v[2], v[3], v[4]};
    try {
      validate(s.dims2d);
      validate(s.dims3d);
    } catch (const ValidationError& e) {
      throw ParseError(line, e.what());
    }
    if (!(v[5] > -kPi && v[5] <= kPi)) throw ParseError(line, "theta outside (-pi, pi]");
    s.theta = Orientation(v[5]);
    s.context.assign(v.begin() + 6, v.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrainingSample> read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

void write_truth(std::ostream& out, const std::vector<SampleTruth>& truth) {
  using nn::format_double;
  out << "# scale width_span clean_h clean_w\n";
  for (const auto& t : truth) {
    out << format_double(t.scale) << ' ' << format_double(t.width_span) << ' '
        << format_double(t.clean_dims2d.h) << ' ' << format_double(t.clean_dims2d.w) << '\n';
  }
}

std::vector<Orientation> brute_force_orientation_oracle(const Dims2D& d2, const Dims3D& dims,
                                                        double grid_step) {
  if (!(grid_step > 0.0)) throw ValidationError("oracle grid step must be positive");
  const double target = implied_width_span(d2, dims.h1).meters;
  const auto n = static_cast<std::size_t>(std::ceil(kTwoPi / grid_step));
  const double step = kTwoPi / static_cast<double>(n);
  const double tol = max_width_span(dims) * step;

  // grid point k sits at -pi + (k + 1) step, so k = n - 1 is exactly pi.
  auto angle_at = [&](std::size_t k) { return -kPi + static_cast<double>(k + 1) * step; };
  std::vector<double> err(n);
  for (std::size_t k = 0; k < n; ++k) {
    err[k] = std::abs(width_span(dims, Orientation(angle_at(k))).meters - target);
  }
  std::vector<char> hit(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const double prev = err[(k + n - 1) % n];
    const double next = err[(k + 1) % n];
    hit[k] = err[k] < tol && err[k] <= prev && err[k] <= next;
  }

  std::vector<Orientation> out;
  if (std::all_of(hit.begin(), hit.end(), [](char h) { return h != 0; })) return out;
  // Start scanning right after a miss so clusters that wrap around pi stay whole.
  std::size_t start = 0;
  while (hit[start]) ++start;
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t k = (start + i) % n;
    if (!hit[k]) continue;
    std::size_t len = 0;
    while (hit[(k + len) % n]) ++len;
    const double center = angle_at(k) + static_cast<double>(len - 1) * step / 2.0;
    out.emplace_back(center);
    i += len - 1;
  }
  std::sort(out.begin(), out.end(),
            [](Orientation a, Orientation b) { return a.radians() < b.radians(); });
  return out;
}

}  // namespace ffnet
