#pragma once

// Minimal reverse-mode engine for stacks of dense layers.
//
// Values are column-major batches: one column per sample. A Tape records the forward
// computation; Tape::backward replays it in reverse and accumulates parameter gradients.
// stop_gradient nodes pass values through unchanged and block every upstream path.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ffnet::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Linear, Relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct LayerSpec {
  std::size_t in_width = 1;
  std::size_t out_width = 1;
  Activation activation = Activation::Linear;
};

/// Weights (out x in) and bias (out) of one dense layer.
struct ParamMatrix {
  Matrix weights;
  Vector bias;
};

struct DenseLayer {
  std::string name;
  LayerSpec spec;
  ParamMatrix params;
};

/// He-uniform for ReLU layers, Xavier-uniform for linear ones; zero bias. Deterministic per seed.
ParamMatrix init_params(const LayerSpec& spec, std::uint64_t seed);

/// activation(W x + b) for a single input vector.
Vector dense_forward(const DenseLayer& layer, const Vector& input);

/// An ordered set of named layers. Layer ids are indices into `layers()`.
class ParamSet {
 public:
  std::size_t add(std::string name, const LayerSpec& spec, std::uint64_t seed);
  std::size_t add(DenseLayer layer);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const DenseLayer& layer(std::size_t id) const { return layers_.at(id); }
  DenseLayer& layer(std::size_t id) { return layers_.at(id); }
  std::size_t find(const std::string& name) const;
  std::size_t parameter_count() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<DenseLayer> layers_;
};

/// Gradient buffers shaped like a ParamSet.
struct Gradients {
  std::vector<ParamMatrix> layers;

  static Gradients zeros_like(const ParamSet& params);
  void set_zero();
  /// Sum of absolute values over one layer.
  double abs_sum(std::size_t layer) const;
  /// Global L2 norm over every layer.
  double norm() const;
  void scale(double factor);
};

class Tape {
 public:
  using NodeId = std::size_t;

  explicit Tape(const ParamSet& params) : params_(&params) {}

  /// Leaf node. Gradients w.r.t. leaves are reported only when `requires_grad` is set.
  NodeId input(Matrix value, bool requires_grad = false);
  NodeId dense(std::size_t layer_id, NodeId x);
  NodeId stop_gradient(NodeId x);
  NodeId concat(const std::vector<NodeId>& parts);

  const Matrix& value(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  /// Seeds dL/d(node) for the given nodes, accumulates parameter gradients into `grads`,
  /// and returns dL/d(node) for every node (zero-sized where nothing flowed).
  /// Throws ValidationError when called on an empty tape or with mis-shaped seeds.
  std::vector<Matrix> backward(const std::vector<std::pair<NodeId, Matrix>>& seeds,
                               Gradients& grads) const;

 private:
  enum class Kind { Input, Dense, StopGradient, Concat };
  struct Node {
    Kind kind = Kind::Input;
    std::vector<NodeId> inputs;
    std::size_t layer = 0;
    Matrix value;
    bool requires_grad = false;
  };

  NodeId push(Node node);

  const ParamSet* params_;
  std::vector<Node> nodes_;
};

/// Classical momentum: v <- mu v + g; p <- p - lr v.
class SgdMomentum {
 public:
  SgdMomentum(const ParamSet& params, double momentum);
  /// Throws NonFiniteError (parameters untouched) if any gradient entry is not finite.
  void step(ParamSet& params, const Gradients& grads, double lr);
  double momentum() const noexcept { return momentum_; }

 private:
  double momentum_;
  Gradients velocity_;
};

struct LayerGradError {
  std::string layer;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<LayerGradError> per_layer;
};

/// Relative error used by the checker: |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares `analytic(params)` against central differences of `loss(params)` for every
/// parameter (or up to `max_per_layer` evenly strided entries per layer when non-zero).
/// The relative-error floor is 1e-6 * max(1, |loss|).
GradCheckReport finite_diff_check(ParamSet& params, const std::function<double()>& loss,
                                  const Gradients& analytic, double eps = 1e-5,
                                  std::size_t max_per_layer = 0);

/// Text checkpoint of shapes and row-major values. load(save(p)) == p bit-exact.
void save_params(std::ostream& os, const ParamSet& params);
ParamSet load_params(std::istream& is);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);
/// Strict full-string parse; throws ValidationError naming `what`.
double parse_double(const std::string& s, const std::string& what);

}  // namespace ffnet::nn
