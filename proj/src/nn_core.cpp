#include "ffnet/nn_core.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <system_error>

#include "ffnet/error.hpp"

namespace ffnet::nn {

const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "linear"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "linear") return Activation::Linear;
  throw ValidationError("unknown activation '" + s + "'");
}

ParamMatrix init_params(const LayerSpec& spec, std::uint64_t seed) {
  if (spec.in_width == 0 || spec.out_width == 0) {
    throw ValidationError("layer widths must be at least 1");
  }
  const auto in = static_cast<double>(spec.in_width);
  const auto out = static_cast<double>(spec.out_width);
  // Uniform(-a, a) has variance a^2 / 3.
  const double limit = spec.activation == Activation::Relu ? std::sqrt(6.0 / in)
                                                           : std::sqrt(6.0 / (in + out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-limit, limit);
  ParamMatrix p;
  p.weights.resize(static_cast<Eigen::Index>(spec.out_width),
                   static_cast<Eigen::Index>(spec.in_width));
  for (Eigen::Index r = 0; r < p.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.weights.cols(); ++c) p.weights(r, c) = dist(rng);
  }
  p.bias = Vector::Zero(static_cast<Eigen::Index>(spec.out_width));
  return p;
}

namespace {

void apply_activation(Activation a, Matrix& m) {
  if (a == Activation::Relu) m = m.cwiseMax(0.0);
}

void check_layer_shape(const DenseLayer& layer) {
  const auto& p = layer.params;
  if (p.weights.rows() != static_cast<Eigen::Index>(layer.spec.out_width) ||
      p.weights.cols() != static_cast<Eigen::Index>(layer.spec.in_width) ||
      p.bias.size() != static_cast<Eigen::Index>(layer.spec.out_width)) {
    throw ValidationError("layer '" + layer.name + "' parameters do not match its spec");
  }
}

}  // namespace

Vector dense_forward(const DenseLayer& layer, const Vector& input) {
  if (input.size() != static_cast<Eigen::Index>(layer.spec.in_width)) {
    throw ValidationError("dense_forward: input length " + std::to_string(input.size()) +
                          " != layer in_width " + std::to_string(layer.spec.in_width));
  }
  Matrix y = layer.params.weights * input + layer.params.bias;
  apply_activation(layer.spec.activation, y);
  return y;
}

std::size_t ParamSet::add(std::string name, const LayerSpec& spec, std::uint64_t seed) {
  DenseLayer layer{std::move(name), spec, init_params(spec, seed)};
  return add(std::move(layer));
}

std::size_t ParamSet::add(DenseLayer layer) {
  check_layer_shape(layer);
  layers_.push_back(std::move(layer));
  return layers_.size() - 1;
}

std::size_t ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  throw ValidationError("no layer named '" + name + "'");
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += static_cast<std::size_t>(l.params.weights.size() + l.params.bias.size());
  }
  return n;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.name != y.name || x.spec.in_width != y.spec.in_width ||
        x.spec.out_width != y.spec.out_width || x.spec.activation != y.spec.activation) {
      return false;
    }
    if (x.params.weights != y.params.weights || x.params.bias != y.params.bias) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const ParamSet& params) {
  Gradients g;
  g.layers.reserve(params.layers().size());
  for (const auto& l : params.layers()) {
    g.layers.push_back({Matrix::Zero(l.params.weights.rows(), l.params.weights.cols()),
                        Vector::Zero(l.params.bias.size())});
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& l : layers) {
    l.weights.setZero();
    l.bias.setZero();
  }
}

double Gradients::abs_sum(std::size_t layer) const {
  const auto& l = layers.at(layer);
  return l.weights.cwiseAbs().sum() + l.bias.cwiseAbs().sum();
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const auto& l : layers) sq += l.weights.squaredNorm() + l.bias.squaredNorm();
  return std::sqrt(sq);
}

void Gradients::scale(double factor) {
  for (auto& l : layers) {
    l.weights *= factor;
    l.bias *= factor;
  }
}

Tape::NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tape::NodeId Tape::input(Matrix value, bool requires_grad) {
  Node n;
  n.kind = Kind::Input;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::NodeId Tape::dense(std::size_t layer_id, NodeId x) {
  const DenseLayer& layer = params_->layer(layer_id);
  const Matrix& in = value(x);
  if (in.rows() != static_cast<Eigen::Index>(layer.spec.in_width)) {
    throw ValidationError("layer '" + layer.name + "' expects " +
                          std::to_string(layer.spec.in_width) + " inputs, got " +
                          std::to_string(in.rows()));
  }
  Node n;
  n.kind = Kind::Dense;
  n.inputs = {x};
  n.layer = layer_id;
  n.value.noalias() = layer.params.weights * in;
  n.value.colwise() += layer.params.bias;
  apply_activation(layer.spec.activation, n.value);
  n.requires_grad = true;
  return push(std::move(n));
}

Tape::NodeId Tape::stop_gradient(NodeId x) {
  Node n;
  n.kind = Kind::StopGradient;
  n.inputs = {x};
  n.value = value(x);
  n.requires_grad = false;
  return push(std::move(n));
}

Tape::NodeId Tape::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ValidationError("concat of zero nodes");
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts.front()).cols();
  bool any_grad = false;
  for (NodeId p : parts) {
    if (value(p).cols() != cols) throw ValidationError("concat: batch sizes differ");
    rows += value(p).rows();
    any_grad = any_grad || nodes_[p].requires_grad;
  }
  Node n;
  n.kind = Kind::Concat;
  n.inputs = parts;
  n.value.resize(rows, cols);
  Eigen::Index at = 0;
  for (NodeId p : parts) {
    const Matrix& v = value(p);
    n.value.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  n.requires_grad = any_grad;
  return push(std::move(n));
}

const Matrix& Tape::value(NodeId id) const {
  if (id >= nodes_.size()) throw ValidationError("tape node " + std::to_string(id) + " unknown");
  return nodes_[id].value;
}

std::vector<Matrix> Tape::backward(const std::vector<std::pair<NodeId, Matrix>>& seeds,
                                   Gradients& grads) const {
  if (nodes_.empty()) throw ValidationError("backward called before any forward computation");
  if (grads.layers.size() != params_->layers().size()) {
    throw ValidationError("gradient buffers do not match the parameter set");
  }
  std::vector<Matrix> g(nodes_.size());
  for (const auto& [id, seed] : seeds) {
    const Matrix& v = value(id);
    if (seed.rows() != v.rows() || seed.cols() != v.cols()) {
      throw ValidationError("backward seed shape does not match node " + std::to_string(id));
    }
    if (g[id].size() == 0) {
      g[id] = seed;
    } else {
      g[id] += seed;
    }
  }

  auto accumulate = [&](NodeId target, const auto& expr) {
    if (g[target].size() == 0) {
      g[target] = expr;
    } else {
      g[target] += expr;
    }
  };

  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (g[idx].size() == 0) continue;
    switch (n.kind) {
      case Kind::Input:
      case Kind::StopGradient:
        break;
      case Kind::Dense: {
        const DenseLayer& layer = params_->layer(n.layer);
        Matrix delta = g[idx];
        if (layer.spec.activation == Activation::Relu) {
          delta = (n.value.array() > 0.0).select(delta, 0.0);
        }
        const NodeId x = n.inputs[0];
        auto& lg = grads.layers[n.layer];
        lg.weights.noalias() += delta * nodes_[x].value.transpose();
        lg.bias += delta.rowwise().sum();
        if (nodes_[x].requires_grad) {
          accumulate(x, layer.params.weights.transpose() * delta);
        }
        break;
      }
      case Kind::Concat: {
        Eigen::Index at = 0;
        for (NodeId p : n.inputs) {
          const Eigen::Index rows = nodes_[p].value.rows();
          if (nodes_[p].requires_grad) accumulate(p, g[idx].middleRows(at, rows));
          at += rows;
        }
        break;
      }
    }
  }
  return g;
}

SgdMomentum::SgdMomentum(const ParamSet& params, double momentum)
    : momentum_(momentum), velocity_(Gradients::zeros_like(params)) {}

void SgdMomentum::step(ParamSet& params, const Gradients& grads, double lr) {
  if (grads.layers.size() != params.layers().size()) {
    throw ValidationError("sgd_step: gradient/parameter shape mismatch");
  }
  for (std::size_t i = 0; i < grads.layers.size(); ++i) {
    const auto& g = grads.layers[i];
    const auto& p = params.layer(i).params;
    if (g.weights.rows() != p.weights.rows() || g.weights.cols() != p.weights.cols() ||
        g.bias.size() != p.bias.size()) {
      throw ValidationError("sgd_step: gradient shape mismatch in layer '" +
                            params.layer(i).name + "'");
    }
    if (!g.weights.allFinite() || !g.bias.allFinite()) {
      throw NonFiniteError("non-finite gradient in layer '" + params.layer(i).name + "'");
    }
  }
  for (std::size_t i = 0; i < grads.layers.size(); ++i) {
    auto& v = velocity_.layers[i];
    auto& p = params.layer(i).params;
    v.weights = momentum_ * v.weights + grads.layers[i].weights;
    v.bias = momentum_ * v.bias + grads.layers[i].bias;
    p.weights -= lr * v.weights;
    p.bias -= lr * v.bias;
  }
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(ParamSet& params, const std::function<double()>& loss,
                                  const Gradients& analytic, double eps,
                                  std::size_t max_per_layer) {
  GradCheckReport report;
  // Central-difference roundoff grows with the loss value, so the floor does too.
  const double floor = 1e-6 * std::max(1.0, std::abs(loss()));
  for (std::size_t li = 0; li < params.layers().size(); ++li) {
    auto& p = params.layer(li).params;
    const auto& ga = analytic.layers.at(li);
    LayerGradError le{params.layer(li).name, 0.0, 0};
    const auto nw = static_cast<std::size_t>(p.weights.size());
    const auto total = nw + static_cast<std::size_t>(p.bias.size());
    const std::size_t stride = (max_per_layer == 0 || total <= max_per_layer)
                                   ? 1
                                   : (total + max_per_layer - 1) / max_per_layer;
    for (std::size_t k = 0; k < total; k += stride) {
      double& slot = k < nw ? p.weights.data()[k] : p.bias.data()[k - nw];
      const double a = k < nw ? ga.weights.data()[k] : ga.bias.data()[k - nw];
      const double saved = slot;
      slot = saved + eps;
      const double up = loss();
      slot = saved - eps;
      const double down = loss();
      slot = saved;
      const double numeric = (up - down) / (2.0 * eps);
      le.max_rel_error = std::max(le.max_rel_error, relative_error(a, numeric, floor));
      ++le.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, le.max_rel_error);
    report.per_layer.push_back(le);
  }
  return report;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (begin != end && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end || begin == end) {
    throw ValidationError("field '" + what + "' is not a number: '" + s + "'");
  }
  return v;
}

namespace {

void expect_token(std::istream& is, const std::string& token) {
  std::string got;
  if (!(is >> got) || got != token) {
    throw ValidationError("checkpoint: expected '" + token + "', got '" + got + "'");
  }
}

std::size_t read_count(std::istream& is, const std::string& what) {
  std::string tok;
  if (!(is >> tok)) throw ValidationError("checkpoint: missing " + what);
  std::size_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ValidationError("checkpoint: bad " + what + " '" + tok + "'");
  }
  return v;
}

double read_value(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw ValidationError("checkpoint: truncated parameter values");
  return parse_double(tok, "parameter");
}

}  // namespace

void save_params(std::ostream& os, const ParamSet& params) {
  os << "ffnet-params 1\n";
  os << "layers " << params.layers().size() << "\n";
  for (const auto& l : params.layers()) {
    os << "layer " << l.name << " " << l.spec.in_width << " " << l.spec.out_width << " "
       << to_string(l.spec.activation) << "\n";
    os << "W";
    for (Eigen::Index r = 0; r < l.params.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.params.weights.cols(); ++c) {
        os << ' ' << format_double(l.params.weights(r, c));
      }
    }
    os << "\nb";
    for (Eigen::Index r = 0; r < l.params.bias.size(); ++r) {
      os << ' ' << format_double(l.params.bias(r));
    }
    os << "\n";
  }
}

ParamSet load_params(std::istream& is) {
  expect_token(is, "ffnet-params");
  if (read_count(is, "version") != 1) throw ValidationError("checkpoint: unsupported version");
  expect_token(is, "layers");
  const std::size_t n = read_count(is, "layer count");
  ParamSet out;
  for (std::size_t i = 0; i < n; ++i) {
    expect_token(is, "layer");
    DenseLayer l;
    if (!(is >> l.name)) throw ValidationError("checkpoint: missing layer name");
    l.spec.in_width = read_count(is, "in_width");
    l.spec.out_width = read_count(is, "out_width");
    std::string act;
    is >> act;
    l.spec.activation = activation_from_string(act);
    const auto rows = static_cast<Eigen::Index>(l.spec.out_width);
    const auto cols = static_cast<Eigen::Index>(l.spec.in_width);
    l.params.weights.resize(rows, cols);
    l.params.bias.resize(rows);
    expect_token(is, "W");
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) l.params.weights(r, c) = read_value(is);
    }
    expect_token(is, "b");
    for (Eigen::Index r = 0; r < rows; ++r) l.params.bias(r) = read_value(is);
    out.add(std::move(l));
  }
  return out;
}

}  // namespace ffnet::nn
