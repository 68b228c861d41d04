#include "ffnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ffnet/error.hpp"

namespace ffnet {

using nn::Activation;
using nn::LayerSpec;
using nn::Matrix;
using NodeId = nn::Tape::NodeId;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

std::string join_schedule(const std::vector<LrPhase>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += (i ? ", " : "") + std::to_string(v[i].steps) + ":" + nn::format_double(v[i].lr);
  }
  return s;
}

std::vector<LrPhase> parse_schedule(const std::string& text) {
  std::vector<LrPhase> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ValidationError("lr_schedule entries must be 'steps:lr', got '" + item + "'");
    }
    const double steps = nn::parse_double(item.substr(0, colon), "lr_schedule steps");
    if (steps < 0 || steps != std::floor(steps)) {
      throw ValidationError("lr_schedule step counts must be non-negative integers");
    }
    out.push_back({static_cast<std::size_t>(steps),
                   nn::parse_double(item.substr(colon + 1), "lr_schedule lr")});
  }
  return out;
}

std::vector<std::size_t> to_sizes(const std::vector<double>& v, const std::string& key) {
  std::vector<std::size_t> out;
  for (double d : v) {
    if (d < 1 || d != std::floor(d)) throw ValidationError(key + " entries must be integers >= 1");
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void ModelConfig::validate() const {
  if (num_bins == 0) throw ValidationError("model: num_bins must be >= 1");
  if (context_width == 0 || encoder_width == 0 || head_hidden == 0) {
    throw ValidationError("model: layer widths must be >= 1");
  }
  if (proc_hidden.empty() ||
      std::any_of(proc_hidden.begin(), proc_hidden.end(), [](std::size_t w) { return w == 0; })) {
    throw ValidationError("model: proc_hidden needs at least one width, all >= 1");
  }
  if (consistency_weight < 0.0) throw ValidationError("model: consistency_weight must be >= 0");
  if (!(exclusion_tau > 0.0)) throw ValidationError("model: exclusion_tau must be positive");
  if (!(dims2d_scale > 0.0)) throw ValidationError("model: dims2d_scale must be positive");
  if (batch_size == 0) throw ValidationError("model: batch_size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("model: momentum must be in [0, 1)");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) {
    throw ValidationError("model: grad_clip must be finite and >= 0");
  }
  for (const auto& p : lr_schedule) {
    if (!(p.lr >= 0.0) || !std::isfinite(p.lr)) {
      throw ValidationError("model: learning rates must be finite and >= 0");
    }
  }
}

std::size_t ModelConfig::total_steps() const {
  std::size_t n = 0;
  for (const auto& p : lr_schedule) n += p.steps;
  return n;
}

double ModelConfig::lr_at(std::size_t step) const {
  std::size_t acc = 0;
  for (const auto& p : lr_schedule) {
    acc += p.steps;
    if (step < acc) return p.lr;
  }
  return lr_schedule.empty() ? 0.0 : lr_schedule.back().lr;
}

std::size_t ModelConfig::concat_width() const {
  return use_feedforward ? encoder_width + 2 * proc_hidden.back() : encoder_width;
}

ModelConfig ModelConfig::from_config(const Config& cfg, const std::string& section) {
  const std::string p = section + ".";
  ModelConfig m;
  m.num_bins = cfg.get_uint(p + "num_bins", m.num_bins);
  m.context_width = cfg.get_uint(p + "context_width", m.context_width);
  m.encoder_width = cfg.get_uint(p + "encoder_width", m.encoder_width);
  if (cfg.has(p + "proc_hidden")) {
    m.proc_hidden = to_sizes(cfg.get_doubles(p + "proc_hidden", {}), p + "proc_hidden");
  }
  m.head_hidden = cfg.get_uint(p + "head_hidden", m.head_hidden);
  m.use_feedforward = cfg.get_bool(p + "use_feedforward", m.use_feedforward);
  m.use_consistency_loss = cfg.get_bool(p + "use_consistency_loss", m.use_consistency_loss);
  m.consistency_weight = cfg.get_double(p + "consistency_weight", m.consistency_weight);
  if (cfg.has(p + "exclusion_tau")) {
    m.exclusion_tau = cfg.get_double(p + "exclusion_tau", m.exclusion_tau);
  } else if (cfg.has(p + "exclusion_tau_deg")) {
    m.exclusion_tau = deg_to_rad(cfg.get_double(p + "exclusion_tau_deg", 15.0));
  }
  m.teacher_force_dims = cfg.get_bool(p + "teacher_force_dims", m.teacher_force_dims);
  m.dims2d_scale = cfg.get_double(p + "dims2d_scale", m.dims2d_scale);
  m.log_dims_input = cfg.get_bool(p + "log_dims_input", m.log_dims_input);
  m.seed = cfg.get_uint(p + "seed", m.seed);
  m.batch_size = cfg.get_uint(p + "batch_size", m.batch_size);
  m.momentum = cfg.get_double(p + "momentum", m.momentum);
  m.grad_clip = cfg.get_double(p + "grad_clip", m.grad_clip);
  if (cfg.has(p + "lr_schedule")) m.lr_schedule = parse_schedule(cfg.get_string(p + "lr_schedule", ""));
  m.validate();
  return m;
}

void ModelConfig::write_to(Config& cfg, const std::string& section) const {
  const std::string p = section + ".";
  cfg.set(p + "num_bins", std::to_string(num_bins));
  cfg.set(p + "context_width", std::to_string(context_width));
  cfg.set(p + "encoder_width", std::to_string(encoder_width));
  cfg.set(p + "proc_hidden", join_sizes(proc_hidden));
  cfg.set(p + "head_hidden", std::to_string(head_hidden));
  cfg.set(p + "use_feedforward", use_feedforward ? "true" : "false");
  cfg.set(p + "use_consistency_loss", use_consistency_loss ? "true" : "false");
  cfg.set(p + "consistency_weight", nn::format_double(consistency_weight));
  cfg.set(p + "exclusion_tau", nn::format_double(exclusion_tau));
  cfg.set(p + "teacher_force_dims", teacher_force_dims ? "true" : "false");
  cfg.set(p + "dims2d_scale", nn::format_double(dims2d_scale));
  cfg.set(p + "log_dims_input", log_dims_input ? "true" : "false");
  cfg.set(p + "seed", std::to_string(seed));
  cfg.set(p + "batch_size", std::to_string(batch_size));
  cfg.set(p + "momentum", nn::format_double(momentum));
  cfg.set(p + "grad_clip", nn::format_double(grad_clip));
  cfg.set(p + "lr_schedule", join_schedule(lr_schedule));
}

FFNetDesk::FFNetDesk(ModelConfig cfg) : cfg_(std::move(cfg)), bins_(cfg_.num_bins) {
  cfg_.validate();
  build_layers();
}

FFNetDesk::FFNetDesk(ModelConfig cfg, nn::ParamSet params)
    : cfg_(std::move(cfg)), bins_(cfg_.num_bins) {
  cfg_.validate();
  build_layers();
  if (params.layers().size() != params_.layers().size()) {
    throw ValidationError("checkpoint layer count does not match the model configuration");
  }
  for (std::size_t i = 0; i < params_.layers().size(); ++i) {
    const auto& want = params_.layer(i);
    const auto& got = params.layer(i);
    if (want.name != got.name || want.spec.in_width != got.spec.in_width ||
        want.spec.out_width != got.spec.out_width || want.spec.activation != got.spec.activation) {
      throw ValidationError("checkpoint layer '" + got.name + "' does not match configuration");
    }
  }
  params_ = std::move(params);
}

void FFNetDesk::build_layers() {
  std::size_t counter = 0;
  auto add = [&](const std::string& name, std::size_t in, std::size_t out, Activation act) {
    const std::uint64_t seed = splitmix64(cfg_.seed * 0x100000001b3ULL + counter++);
    return params_.add(name, LayerSpec{in, out, act}, seed);
  };
  encoder_.push_back(add("enc1", cfg_.context_width, cfg_.encoder_width, Activation::Relu));
  encoder_.push_back(add("enc2", cfg_.encoder_width, cfg_.encoder_width, Activation::Relu));
  dims_ = add("dims", cfg_.encoder_width, 3, Activation::Linear);
  if (cfg_.use_feedforward) {
    std::size_t in2 = 2;
    std::size_t in3 = 3;
    for (std::size_t i = 0; i < cfg_.proc_hidden.size(); ++i) {
      const std::size_t w = cfg_.proc_hidden[i];
      proc2d_.push_back(add("proc2d_" + std::to_string(i + 1), in2, w, Activation::Relu));
      proc3d_.push_back(add("proc3d_" + std::to_string(i + 1), in3, w, Activation::Relu));
      in2 = in3 = w;
    }
  }
  head_.push_back(add("head1", cfg_.concat_width(), cfg_.head_hidden, Activation::Relu));
  head_.push_back(add("head2", cfg_.head_hidden, 2 * cfg_.num_bins, Activation::Linear));
}

BatchForward FFNetDesk::forward_batch(const std::vector<const TrainingSample*>& batch,
                                      const ForwardOptions& options) const {
  if (batch.empty()) throw ValidationError("forward on an empty batch");
  if (!options.feedforward_dims.empty() && options.feedforward_dims.size() != batch.size()) {
    throw ValidationError("feedforward_dims override must have one entry per sample");
  }
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto cw = static_cast<Eigen::Index>(cfg_.context_width);
  Matrix context(cw, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& c = batch[static_cast<std::size_t>(j)]->context;
    if (c.size() != cfg_.context_width) {
      throw ValidationError("sample context width " + std::to_string(c.size()) +
                            " does not match model context_width " +
                            std::to_string(cfg_.context_width));
    }
    for (Eigen::Index k = 0; k < cw; ++k) context(k, j) = c[static_cast<std::size_t>(k)];
  }

  BatchForward fwd(params_);
  auto& tape = fwd.tape;
  NodeId x = tape.input(std::move(context));
  for (std::size_t id : encoder_) x = tape.dense(id, x);
  fwd.features = x;
  fwd.dims = tape.dense(dims_, fwd.features);

  // Logs are clamped away from 0 so an untrained regressor cannot produce -inf.
  auto dims_feature = [&](double v) {
    return cfg_.log_dims_input ? std::log(std::max(v, 1e-3)) : v;
  };

  std::vector<NodeId> parts{fwd.features};
  if (cfg_.use_feedforward) {
    Matrix d2(2, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& s = *batch[static_cast<std::size_t>(j)];
      d2(0, j) = dims_feature(s.dims2d.h / cfg_.dims2d_scale);
      d2(1, j) = dims_feature(s.dims2d.w / cfg_.dims2d_scale);
    }
    NodeId a = tape.input(std::move(d2));
    for (std::size_t id : proc2d_) a = tape.dense(id, a);

    NodeId b = 0;
    if (!options.feedforward_dims.empty() || cfg_.teacher_force_dims) {
      Matrix d3(3, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const Dims3D& d = options.feedforward_dims.empty() ? batch[ju]->dims3d
                                                           : options.feedforward_dims[ju];
        d3(0, j) = dims_feature(d.h1);
        d3(1, j) = dims_feature(d.w1);
        d3(2, j) = dims_feature(d.l1);
      }
      b = tape.input(std::move(d3));
    } else {
      b = tape.stop_gradient(fwd.dims);
      if (cfg_.log_dims_input) {
        Matrix logged = tape.value(b).unaryExpr([&](double v) { return dims_feature(v); });
        b = tape.input(std::move(logged));
      }
    }
    for (std::size_t id : proc3d_) b = tape.dense(id, b);
    parts.push_back(a);
    parts.push_back(b);
  }
  NodeId h = parts.size() == 1 ? parts.front() : tape.concat(parts);
  for (std::size_t id : head_) h = tape.dense(id, h);
  fwd.head = h;

  const Matrix& head = tape.value(fwd.head);
  const Matrix& dims = tape.value(fwd.dims);
  fwd.results.resize(batch.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    ForwardResult& r = fwd.results[static_cast<std::size_t>(j)];
    r.dims3d_pred = {dims(0, j), dims(1, j), dims(2, j)};
    r.bin_outputs.resize(cfg_.num_bins);
    for (std::size_t i = 0; i < cfg_.num_bins; ++i) {
      r.bin_outputs[i] = {head(static_cast<Eigen::Index>(2 * i), j),
                          head(static_cast<Eigen::Index>(2 * i + 1), j)};
    }
    try {
      r.per_bin_angles = per_bin_global_angles(r.bin_outputs, bins_);
      r.excluded = exclusion_vote(r.per_bin_angles, cfg_.exclusion_tau);
      r.theta_pred = aggregate_orientation(r.per_bin_angles, r.excluded);
    } catch (const DegenerateError&) {
      r.degenerate = true;
      r.theta_pred.reset();
      if (r.per_bin_angles.empty()) r.excluded.clear();
    }
  }
  return fwd;
}

ForwardResult FFNetDesk::forward(const TrainingSample& sample, const ForwardOptions& options) const {
  return std::move(forward_batch({&sample}, options).results.front());
}

namespace {

// Loss of one sample; writes d/d(head column) and d/d(dims column) for the selected terms
// when the output pointers are non-null.
LossBreakdown sample_loss(const ForwardResult& r, const TrainingSample& s, const ModelConfig& cfg,
                          const BinConfig& bins, unsigned terms, double* d_head, double* d_dims) {
  if (r.per_bin_angles.empty()) {
    throw DegenerateError("loss on a degenerate forward result (a bin output is (0, 0))");
  }
  LossBreakdown out;
  const double truth[3] = {s.dims3d.h1, s.dims3d.w1, s.dims3d.l1};
  const double pred[3] = {r.dims3d_pred.h1, r.dims3d_pred.w1, r.dims3d_pred.l1};
  for (int k = 0; k < 3; ++k) {
    const double e = pred[k] - truth[k];
    out.dimensions += e * e;
    if (d_dims && (terms & kTermDimensions)) d_dims[k] += 2.0 * e;
  }

  const BinOutputs targets = encode_targets(s.theta, bins);
  for (std::size_t i = 0; i < r.bin_outputs.size(); ++i) {
    if (r.excluded.contains(i)) continue;
    const double sv = r.bin_outputs[i].sin_value;
    const double cv = r.bin_outputs[i].cos_value;
    out.orientation += bin_loss(r.bin_outputs[i], targets[i]);
    if (d_head && (terms & kTermOrientation)) {
      const double n2 = sv * sv + cv * cv;
      const double n3 = n2 * std::sqrt(n2);
      const double cross = targets[i].sin_value * cv - targets[i].cos_value * sv;
      d_head[2 * i] += -cv * cross / n3;
      d_head[2 * i + 1] += sv * cross / n3;
    }
  }

  if (cfg.use_consistency_loss) {
    const double lambda = cfg.consistency_weight;
    const double t = s.theta.radians();
    const Dims3D predicted{s.dims3d.h1, r.dims3d_pred.w1, r.dims3d_pred.l1};
    const double rd = consistency_residual(s.dims2d, predicted, s.theta);
    out.consistency_dims = lambda * rd * rd;
    if (d_dims && (terms & kTermConsistencyDims)) {
      d_dims[1] += 2.0 * lambda * rd * s.dims2d.h * std::abs(std::sin(t));
      d_dims[2] += 2.0 * lambda * rd * s.dims2d.h * std::abs(std::cos(t));
    }
    if (r.theta_pred) {
      const double tp = r.theta_pred->radians();
      const double ro = consistency_residual(s.dims2d, s.dims3d, *r.theta_pred);
      out.consistency_orientation = lambda * ro * ro;
      if (d_head && (terms & kTermConsistencyOrientation)) {
        const double dr_dtheta = s.dims2d.h * (s.dims3d.w1 * sign(std::sin(tp)) * std::cos(tp) -
                                               s.dims3d.l1 * sign(std::cos(tp)) * std::sin(tp));
        const double outer = 2.0 * lambda * ro * dr_dtheta;
        double sum_s = 0.0;
        double sum_c = 0.0;
        for (std::size_t i = 0; i < r.per_bin_angles.size(); ++i) {
          if (r.excluded.contains(i)) continue;
          sum_s += std::sin(r.per_bin_angles[i]);
          sum_c += std::cos(r.per_bin_angles[i]);
        }
        const double norm2 = sum_s * sum_s + sum_c * sum_c;
        for (std::size_t i = 0; i < r.per_bin_angles.size(); ++i) {
          if (r.excluded.contains(i)) continue;
          const double a = r.per_bin_angles[i];
          const double dtheta_da = (sum_c * std::cos(a) + sum_s * std::sin(a)) / norm2;
          const double sv = r.bin_outputs[i].sin_value;
          const double cv = r.bin_outputs[i].cos_value;
          const double n2 = sv * sv + cv * cv;
          d_head[2 * i] += outer * dtheta_da * cv / n2;
          d_head[2 * i + 1] += outer * dtheta_da * (-sv) / n2;
        }
      }
    }
  }
  out.total = out.dimensions + out.orientation + out.consistency_dims + out.consistency_orientation;
  return out;
}

}  // namespace

LossBreakdown total_loss(const ForwardResult& result, const TrainingSample& sample,
                         const ModelConfig& cfg) {
  return sample_loss(result, sample, cfg, BinConfig(cfg.num_bins), 0u, nullptr, nullptr);
}

LossBreakdown FFNetDesk::batch_loss(const BatchForward& fwd,
                                    const std::vector<const TrainingSample*>& batch,
                                    unsigned terms, Matrix* d_head, Matrix* d_dims) const {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (d_head) *d_head = Matrix::Zero(static_cast<Eigen::Index>(2 * cfg_.num_bins), n);
  if (d_dims) *d_dims = Matrix::Zero(3, n);
  LossBreakdown mean;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const LossBreakdown l =
        sample_loss(fwd.results[ju], *batch[ju], cfg_, bins_, terms,
                    d_head ? d_head->col(j).data() : nullptr, d_dims ? d_dims->col(j).data() : nullptr);
    mean.dimensions += l.dimensions * inv;
    mean.orientation += l.orientation * inv;
    mean.consistency_dims += l.consistency_dims * inv;
    mean.consistency_orientation += l.consistency_orientation * inv;
  }
  mean.total = mean.dimensions + mean.orientation + mean.consistency_dims + mean.consistency_orientation;
  if (d_head) *d_head *= inv;
  if (d_dims) *d_dims *= inv;
  return mean;
}

LossBreakdown FFNetDesk::gradients(const std::vector<const TrainingSample*>& batch, unsigned terms,
                                   nn::Gradients& grads) const {
  const BatchForward fwd = forward_batch(batch);
  Matrix d_head;
  Matrix d_dims;
  const LossBreakdown loss = batch_loss(fwd, batch, terms, &d_head, &d_dims);
  fwd.tape.backward({{fwd.head, d_head}, {fwd.dims, d_dims}}, grads);
  return loss;
}

nn::GradCheckReport gradient_check(FFNetDesk& model, const std::vector<TrainingSample>& batch,
                                   unsigned terms, double eps, std::size_t max_per_layer,
                                   const std::function<void(nn::Gradients&)>& tamper) {
  if (batch.empty()) throw ValidationError("gradient_check: empty batch");
  std::vector<const TrainingSample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  nn::Gradients grads = nn::Gradients::zeros_like(model.params());
  model.gradients(ptrs, terms, grads);
  if (tamper) tamper(grads);
  // Central differences see the 3D processor input as a constant, which is what the
  // stop-gradient makes of it: freeze it at its unperturbed value.
  ForwardOptions frozen;
  if (model.config().use_feedforward && !model.config().teacher_force_dims) {
    for (const auto* s : ptrs) frozen.feedforward_dims.push_back(model.forward(*s).dims3d_pred);
  }
  auto loss = [&] {
    const BatchForward fwd = model.forward_batch(ptrs, frozen);
    const LossBreakdown l = model.batch_loss(fwd, ptrs, terms, nullptr, nullptr);
    double v = 0.0;
    if (terms & kTermDimensions) v += l.dimensions;
    if (terms & kTermOrientation) v += l.orientation;
    if (terms & kTermConsistencyDims) v += l.consistency_dims;
    if (terms & kTermConsistencyOrientation) v += l.consistency_orientation;
    return v;
  };
  return nn::finite_diff_check(model.params(), loss, grads, eps, max_per_layer);
}

TrainResult train(const std::vector<TrainingSample>& data, const ModelConfig& cfg) {
  if (data.empty()) throw ValidationError("train: dataset is empty");
  cfg.validate();
  for (const auto& s : data) {
    if (s.context.size() != cfg.context_width) {
      throw ValidationError("train: sample context width does not match model context_width");
    }
  }
  TrainResult out{FFNetDesk(cfg), {}};
  FFNetDesk& model = out.model;
  nn::SgdMomentum opt(model.params(), cfg.momentum);
  nn::Gradients grads = nn::Gradients::zeros_like(model.params());

  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x5eedda7aULL));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  const std::size_t steps = cfg.total_steps();
  const std::size_t bs = std::min(cfg.batch_size, data.size());
  std::vector<const TrainingSample*> batch(bs);
  out.log.reserve(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    for (std::size_t k = 0; k < bs; ++k) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch[k] = &data[order[cursor++]];
    }
    grads.set_zero();
    LossBreakdown loss;
    try {
      loss = model.gradients(batch, kAllTerms, grads);
    } catch (const DegenerateError& e) {
      throw NonFiniteError("step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (dimensions=" << loss.dimensions
          << ", orientation=" << loss.orientation << ", consistency=" << loss.consistency() << ")";
      throw NonFiniteError(msg.str());
    }
    const double lr = cfg.lr_at(step);
    const double norm = grads.norm();
    if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) grads.scale(cfg.grad_clip / norm);
    try {
      opt.step(model.params(), grads, lr);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("step " + std::to_string(step) + ": " + e.what());
    }
    out.log.push_back({step, lr, loss, norm});
  }
  return out;
}

Prediction predict_orientation(const FFNetDesk& model, const TrainingSample& sample,
                               const ForwardOptions& options) {
  ForwardResult r = model.forward(sample, options);
  if (r.degenerate || !r.theta_pred) {
    throw DegenerateError("prediction has no defined orientation");
  }
  return {*r.theta_pred, std::move(r.per_bin_angles), std::move(r.excluded), r.dims3d_pred};
}

EvalSummary evaluate(const FFNetDesk& model, const std::vector<TrainingSample>& samples) {
  EvalSummary out;
  if (samples.empty()) return out;
  constexpr std::size_t kChunk = 256;
  ModelConfig plain_loss = model.config();
  plain_loss.use_consistency_loss = false;
  const BinConfig& bins = model.bins();
  double loss_sum = 0.0;
  double dims_sum = 0.0;
  double orient_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    std::vector<const TrainingSample*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&samples[i]);
    const BatchForward fwd = model.forward_batch(batch);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const ForwardResult& r = fwd.results[j];
      if (r.degenerate && r.per_bin_angles.empty()) {
        ++out.degenerate;
        continue;
      }
      const LossBreakdown l = sample_loss(r, *batch[j], plain_loss, bins, 0u, nullptr, nullptr);
      loss_sum += l.total;
      dims_sum += l.dimensions;
      orient_sum += l.orientation;
      ++counted;
      if (r.theta_pred) {
        out.angle_pairs.emplace_back(r.theta_pred->radians(), batch[j]->theta.radians());
      } else {
        ++out.degenerate;
      }
    }
  }
  if (counted > 0) {
    out.heldout_loss = loss_sum / static_cast<double>(counted);
    out.dimensions = dims_sum / static_cast<double>(counted);
    out.orientation = orient_sum / static_cast<double>(counted);
  }
  double err = 0.0;
  for (const auto& [p, t] : out.angle_pairs) err += rad_to_deg(circular_distance(p, t));
  if (!out.angle_pairs.empty()) out.mean_abs_error_deg = err / static_cast<double>(out.angle_pairs.size());
  return out;
}

std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> split_holdout(
    const std::vector<TrainingSample>& data, double fraction) {
  if (fraction < 0.0 || fraction >= 1.0) throw ValidationError("holdout fraction must be in [0, 1)");
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  const auto cut = static_cast<std::ptrdiff_t>(data.size() - held);
  return {std::vector<TrainingSample>(data.begin(), data.begin() + cut),
          std::vector<TrainingSample>(data.begin() + cut, data.end())};
}

const char* to_string(SweepKind k) { return k == SweepKind::Width2D ? "2d_width" : "3d_height"; }

SweepKind sweep_kind_from_string(const std::string& s) {
  if (s == "2d_width") return SweepKind::Width2D;
  if (s == "3d_height") return SweepKind::Height3D;
  throw ValidationError("sweep kind must be '2d_width' or '3d_height', got '" + s + "'");
}

std::vector<double> default_sweep_factors(std::size_t n, double lo, double hi) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> out(n);
  const auto last = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<double>(i);
    out[i] = (lo * (last - k) + hi * k) / last;
  }
  return out;
}

namespace {

SweepRow sweep_row(const FFNetDesk& model, const TrainingSample& s, double factor,
                   const ForwardOptions& opt) {
  SweepRow row;
  row.factor = factor;
  const ForwardResult r = model.forward(s, opt);
  if (r.theta_pred) row.theta_pred = r.theta_pred->radians();
  row.per_bin_angles = r.per_bin_angles;
  return row;
}

void attach_analytic(std::vector<SweepRow>& rows, const TrainingSample& sample, SweepKind kind,
                     const std::vector<double>& factors) {
  const auto curve = analytic_selector_curve(sample, kind, factors, sample.theta.radians());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].analytic_theta = curve[i];
}

}  // namespace

std::vector<SweepRow> sweep_2d_width(const FFNetDesk& model, const TrainingSample& sample,
                                     const std::vector<double>& factors) {
  std::vector<SweepRow> rows;
  for (double f : factors) {
    TrainingSample s = sample;
    s.dims2d.w = sample.dims2d.w * f;
    rows.push_back(sweep_row(model, s, f, {}));
  }
  attach_analytic(rows, sample, SweepKind::Width2D, factors);
  return rows;
}

std::vector<SweepRow> sweep_3d_height(const FFNetDesk& model, const TrainingSample& sample,
                                      const std::vector<double>& factors) {
  Dims3D base = model.config().teacher_force_dims ? sample.dims3d : model.forward(sample).dims3d_pred;
  std::vector<SweepRow> rows;
  for (double f : factors) {
    ForwardOptions opt;
    Dims3D d = base;
    d.h1 = base.h1 * f;
    opt.feedforward_dims = {d};
    if (!model.config().use_feedforward) opt.feedforward_dims.clear();
    rows.push_back(sweep_row(model, sample, f, opt));
  }
  attach_analytic(rows, sample, SweepKind::Height3D, factors);
  return rows;
}

std::vector<std::optional<double>> analytic_selector_curve(const TrainingSample& sample,
                                                           SweepKind kind,
                                                           const std::vector<double>& factors,
                                                           double reference) {
  std::vector<std::optional<double>> out;
  for (double f : factors) {
    Dims2D d2 = sample.dims2d;
    Dims3D d3 = sample.dims3d;
    if (kind == SweepKind::Width2D) {
      d2.w *= f;
    } else {
      d3.h1 *= f;
    }
    const InversionResult inv = invert_orientation_candidates(d2, d3);
    if (inv.candidates.empty()) {
      out.emplace_back();
      continue;
    }
    const auto best = std::min_element(inv.candidates.begin(), inv.candidates.end(),
                                       [&](Orientation a, Orientation b) {
                                         return circular_distance(a.radians(), reference) <
                                                circular_distance(b.radians(), reference);
                                       });
    out.emplace_back(best->radians());
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, std::size_t num_bins) {
  out << "factor,theta_pred_deg";
  for (std::size_t i = 0; i < num_bins; ++i) out << ",bin" << i << "_deg";
  out << ",analytic_theta_deg\n";
  for (const auto& r : rows) {
    out << nn::format_double(r.factor) << ',';
    if (r.theta_pred) out << nn::format_double(rad_to_deg(*r.theta_pred));
    for (std::size_t i = 0; i < num_bins; ++i) {
      out << ',';
      if (i < r.per_bin_angles.size()) out << nn::format_double(rad_to_deg(r.per_bin_angles[i]));
    }
    out << ',';
    if (r.analytic_theta) out << nn::format_double(rad_to_deg(*r.analytic_theta));
    out << '\n';
  }
}

void write_loss_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << "step,lr,total,dims,orient,consistency\n";
  for (const auto& r : log) {
    out << r.step << ',' << nn::format_double(r.lr) << ',' << nn::format_double(r.loss.total) << ','
        << nn::format_double(r.loss.dimensions) << ',' << nn::format_double(r.loss.orientation)
        << ',' << nn::format_double(r.loss.consistency()) << '\n';
  }
}

void save_model(std::ostream& out, const FFNetDesk& model) {
  Config cfg;
  model.config().write_to(cfg);
  const std::string text = cfg.serialize();
  const auto lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  out << "ffnet-model 1\nconfig " << lines << "\n" << text;
  nn::save_params(out, model.params());
}

FFNetDesk load_model(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "ffnet-model" || version != 1) {
    throw ValidationError("not an ffnet-model v1 checkpoint");
  }
  std::string tag;
  std::size_t lines = 0;
  if (!(in >> tag >> lines) || tag != "config") throw ValidationError("checkpoint: missing config block");
  std::string rest;
  std::getline(in, rest);
  std::string text;
  for (std::size_t i = 0; i < lines; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("checkpoint: truncated config block");
    text += line + "\n";
  }
  const ModelConfig cfg = ModelConfig::from_config(Config::parse_text(text));
  return FFNetDesk(cfg, nn::load_params(in));
}

void save_model_file(const std::string& path, const FFNetDesk& model) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint '" + path + "'");
  save_model(out, model);
}

FFNetDesk load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  return load_model(in);
}

}  // namespace ffnet
