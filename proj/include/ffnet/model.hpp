#pragma once

// Desk-scale feedforward orientation network.
//
//   context --enc--> features --dims--> dims3d_pred
//   (h, w) / dims2d_scale --proc2d--> f2d
//   stop_gradient(dims3d_pred) --proc3d--> f3d
//   concat(features, f2d, f3d) --head--> 2B raw (sin, cos) pairs
//
// The plain variant drops both processors and feeds the head with `features` alone.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ffnet/binning.hpp"
#include "ffnet/config.hpp"
#include "ffnet/geometry.hpp"
#include "ffnet/kitti_io.hpp"
#include "ffnet/nn_core.hpp"

namespace ffnet {

struct LrPhase {
  std::size_t steps = 0;
  double lr = 0.0;
};

struct ModelConfig {
  std::size_t num_bins = 4;
  std::size_t context_width = 16;
  std::size_t encoder_width = 64;
  std::vector<std::size_t> proc_hidden{512, 2048};
  std::size_t head_hidden = 512;
  bool use_feedforward = true;
  bool use_consistency_loss = false;
  double consistency_weight = 0.01;
  double exclusion_tau = kDefaultExclusionTau;
  /// Feed ground-truth dimensions to the 3D processor instead of the regressor output.
  bool teacher_force_dims = false;
  /// Pixels are divided by this before entering the 2D processor.
  double dims2d_scale = 100.0;
  /// Feed log(h / dims2d_scale), log(w / dims2d_scale) and log(h1, w1, l1) to the processors.
  bool log_dims_input = true;
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  /// Gradients with a global L2 norm above this are rescaled to it; 0 disables clipping.
  double grad_clip = 100.0;
  std::vector<LrPhase> lr_schedule{{600, 1e-3}, {1400, 1e-4}};

  void validate() const;
  std::size_t total_steps() const;
  double lr_at(std::size_t step) const;
  std::size_t concat_width() const;

  /// Reads keys under `section.` (see README for the list); missing keys keep defaults.
  static ModelConfig from_config(const Config& cfg, const std::string& section = "model");
  void write_to(Config& cfg, const std::string& section = "model") const;
};

/// Which loss terms contribute to gradients.
enum LossTerm : unsigned {
  kTermDimensions = 1u,
  kTermOrientation = 2u,
  kTermConsistencyDims = 4u,
  kTermConsistencyOrientation = 8u,
  kAllTerms = 15u,
};

struct LossBreakdown {
  double dimensions = 0.0;
  double orientation = 0.0;
  /// Weighted squared residuals (predicted dims with true yaw; true dims with predicted yaw).
  double consistency_dims = 0.0;
  double consistency_orientation = 0.0;
  double total = 0.0;

  double consistency() const noexcept { return consistency_dims + consistency_orientation; }
};

struct ForwardResult {
  /// Raw regressor output (h1, w1, l1); not constrained to be positive.
  Dims3D dims3d_pred;
  BinOutputs bin_outputs;
  std::vector<double> per_bin_angles;  // empty when degenerate
  BinSet excluded;
  std::optional<Orientation> theta_pred;
  bool degenerate = false;
};

struct ForwardOptions {
  /// Per-sample replacement for the 3D processor input; empty keeps the model's own.
  std::vector<Dims3D> feedforward_dims;
};

class FFNetDesk;

/// A recorded batch forward pass with the tape needed for backward.
struct BatchForward {
  explicit BatchForward(const nn::ParamSet& params) : tape(params) {}

  nn::Tape tape;
  nn::Tape::NodeId features = 0;
  nn::Tape::NodeId dims = 0;
  nn::Tape::NodeId head = 0;
  std::vector<ForwardResult> results;
};

class FFNetDesk {
 public:
  explicit FFNetDesk(ModelConfig cfg);
  FFNetDesk(ModelConfig cfg, nn::ParamSet params);

  const ModelConfig& config() const noexcept { return cfg_; }
  const BinConfig& bins() const noexcept { return bins_; }
  const nn::ParamSet& params() const noexcept { return params_; }
  nn::ParamSet& params() noexcept { return params_; }

  /// Layer ids of each stack, in order.
  const std::vector<std::size_t>& encoder_layers() const noexcept { return encoder_; }
  std::size_t dims_layer() const noexcept { return dims_; }
  const std::vector<std::size_t>& proc2d_layers() const noexcept { return proc2d_; }
  const std::vector<std::size_t>& proc3d_layers() const noexcept { return proc3d_; }
  const std::vector<std::size_t>& head_layers() const noexcept { return head_; }

  /// Throws ValidationError if any context has the wrong width.
  BatchForward forward_batch(const std::vector<const TrainingSample*>& batch,
                             const ForwardOptions& options = {}) const;
  ForwardResult forward(const TrainingSample& sample, const ForwardOptions& options = {}) const;

  /// Mean loss over the batch plus the gradient seeds for the selected terms.
  LossBreakdown batch_loss(const BatchForward& fwd, const std::vector<const TrainingSample*>& batch,
                           unsigned terms, nn::Matrix* d_head, nn::Matrix* d_dims) const;

  /// Mean loss and parameter gradients of the selected terms over `batch`.
  LossBreakdown gradients(const std::vector<const TrainingSample*>& batch, unsigned terms,
                          nn::Gradients& grads) const;

  friend bool operator==(const FFNetDesk& a, const FFNetDesk& b) {
    return a.params_ == b.params_;
  }

 private:
  void build_layers();

  ModelConfig cfg_;
  BinConfig bins_;
  nn::ParamSet params_;
  std::vector<std::size_t> encoder_;
  std::size_t dims_ = 0;
  std::vector<std::size_t> proc2d_;
  std::vector<std::size_t> proc3d_;
  std::vector<std::size_t> head_;
};

/// Sum of dimension and orientation terms, plus weighted consistency terms when
/// enabled. Throws DegenerateError on a degenerate forward result.
LossBreakdown total_loss(const ForwardResult& result, const TrainingSample& sample,
                         const ModelConfig& cfg);

/// Central differences of the mean loss of `terms` over `batch` against backward, layer by
/// layer, with the stop-gradient input of the 3D processor held at its unperturbed value.
/// `tamper` may alter the analytic gradients before comparison (test fixtures).
nn::GradCheckReport gradient_check(FFNetDesk& model, const std::vector<TrainingSample>& batch,
                                   unsigned terms = kAllTerms, double eps = 1e-5,
                                   std::size_t max_per_layer = 0,
                                   const std::function<void(nn::Gradients&)>& tamper = {});

struct TrainLogRow {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
  /// Global gradient norm before clipping.
  double grad_norm = 0.0;
};

struct TrainResult {
  FFNetDesk model;
  std::vector<TrainLogRow> log;
};

/// Minibatch SGD with momentum. Deterministic for a given (data, cfg). Throws
/// NonFiniteError naming the step and the loss terms if the loss stops being finite.
TrainResult train(const std::vector<TrainingSample>& data, const ModelConfig& cfg);

struct Prediction {
  Orientation theta;
  std::vector<double> per_bin_angles;
  BinSet excluded;
  Dims3D dims3d_pred;
};

/// Throws DegenerateError when the bins carry no usable direction.
Prediction predict_orientation(const FFNetDesk& model, const TrainingSample& sample,
                               const ForwardOptions& options = {});

struct EvalSummary {
  /// Mean of dimensions + orientation terms; consistency terms are never included.
  double heldout_loss = 0.0;
  double dimensions = 0.0;
  double orientation = 0.0;
  double mean_abs_error_deg = 0.0;
  std::size_t degenerate = 0;
  std::vector<std::pair<double, double>> angle_pairs;  // (pred, truth) radians
};

EvalSummary evaluate(const FFNetDesk& model, const std::vector<TrainingSample>& samples);

/// Deterministic split: the last round(fraction * n) samples are held out.
std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> split_holdout(
    const std::vector<TrainingSample>& data, double fraction);

enum class SweepKind { Width2D, Height3D };

const char* to_string(SweepKind k);
SweepKind sweep_kind_from_string(const std::string& s);

struct SweepRow {
  double factor = 0.0;
  std::optional<double> theta_pred;  // radians; empty when degenerate
  std::vector<double> per_bin_angles;
  /// Analytic counterpart: inversion candidate nearest the reference yaw.
  std::optional<double> analytic_theta;
};

/// `n` evenly spaced factors on [lo, hi]; exact endpoints.
std::vector<double> default_sweep_factors(std::size_t n = 20, double lo = 0.1, double hi = 2.0);

/// Scales the 2D width of `sample` by each factor and re-predicts.
std::vector<SweepRow> sweep_2d_width(const FFNetDesk& model, const TrainingSample& sample,
                                     const std::vector<double>& factors);
/// Scales h1 of the 3D processor input (the model's own prediction, not the truth).
std::vector<SweepRow> sweep_3d_height(const FFNetDesk& model, const TrainingSample& sample,
                                      const std::vector<double>& factors);

/// Inversion-based curve for the same perturbation: for each factor, the candidate nearest
/// `reference` (or nothing when infeasible). Uses the sample's true 3D dimensions.
std::vector<std::optional<double>> analytic_selector_curve(const TrainingSample& sample,
                                                           SweepKind kind,
                                                           const std::vector<double>& factors,
                                                           double reference);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, std::size_t num_bins);
void write_loss_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log);

/// Checkpoint: "ffnet-model 1", the config block, then the parameter block.
void save_model(std::ostream& out, const FFNetDesk& model);
FFNetDesk load_model(std::istream& in);
void save_model_file(const std::string& path, const FFNetDesk& model);
FFNetDesk load_model_file(const std::string& path);

}  // namespace ffnet
