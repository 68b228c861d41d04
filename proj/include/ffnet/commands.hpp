#pragma once

// Reproducible experiment commands behind the `ffnet` executable. Every command writes only
// inside its out directory and leaves a manifest.json there.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ffnet/config.hpp"
#include "ffnet/manifest.hpp"
#include "ffnet/model.hpp"
#include "ffnet/synth.hpp"

namespace ffnet {

/// Command-specific options keyed by flag name without dashes ("data", "checkpoint",
/// "labels", "detections", "which", "sample", "index", "manifest", "oracle", "invert").
using CommandOptions = std::map<std::string, std::string>;

struct CommandRequest {
  std::string command;
  /// Empty when no --config was given; commands that need one throw ValidationError.
  std::optional<Config> config;
  /// Overrides synth.seed and model.seed.
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;
  CommandOptions options;
};

struct CommandResult {
  int exit_code = 0;
  RunManifest manifest;
};

/// Names accepted by run_command.
const std::vector<std::string>& command_names();

/// Runs one command. Throws ValidationError for bad input and other ffnet::Error for
/// internal failures; a failed check (gradcheck, replay mismatch) returns exit code 2.
CommandResult run_command(const CommandRequest& request, std::ostream& log);

struct TrainOutcome {
  TrainResult trained;
  EvalSummary heldout;
  std::size_t train_size = 0;
  std::size_t heldout_size = 0;
};

/// Shared by train and compare so a compare row equals a train run with the same settings.
TrainOutcome train_and_evaluate(const std::vector<TrainingSample>& data, const ModelConfig& cfg,
                                double holdout_fraction);

/// "h,w,h1,w1,l1,theta_deg" (theta optional, default 0). Context comes from synth.make_context.
TrainingSample parse_sample_spec(const std::string& spec, const SynthConfig& synth,
                                 std::size_t context_width, std::uint64_t seed);

/// The exemplar pedestrian: h=86, w=33, h1=1.68, w1=0.50, l1=0.42, theta=-127.26 deg.
inline constexpr const char* kExemplarSample = "86,33,1.68,0.50,0.42,-127.26";

struct GradCheckSettings {
  double eps = 1e-5;
  double threshold = 1e-4;
  std::size_t samples = 4;
  std::size_t max_per_layer = 0;
};

/// Gradient check of the model described by `cfg` ([model] and [gradcheck] sections) on
/// synthetic samples of its own context width. Passes when the worst error is below the
/// threshold.
struct GradCheckOutcome {
  nn::GradCheckReport report;
  GradCheckSettings settings;
  bool passed = false;
};
GradCheckOutcome run_gradcheck(const Config& cfg,
                               const std::function<void(nn::Gradients&)>& tamper = {});

}  // namespace ffnet
