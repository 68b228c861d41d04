#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ffnet/commands.hpp"
#include "ffnet/error.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string labels;
  std::string detections;
  std::string which;
  std::string sample;
  std::string index;
  std::string manifest;
  std::vector<double> invert;
  bool oracle = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "Configuration file");
  app->add_option("--seed", f.seed, "Overrides synth.seed and model.seed");
  app->add_option("--out", f.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ffnet: pedestrian orientation with 2D/3D dimension feedforward"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, f);

  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  add_common(train, f);
  train->add_option("--data", f.data, "Dataset file")->required();

  auto* compare = app.add_subcommand("compare", "Proposed/plain x consistency on/off table");
  add_common(compare, f);
  compare->add_option("--data", f.data, "Dataset file")->required();

  auto* eval = app.add_subcommand("eval", "AOS / AP from KITTI label and detection files");
  add_common(eval, f);
  eval->add_option("--labels", f.labels, "Label file or directory")->required();
  eval->add_option("--detections", f.detections, "Detection file or directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Control-variate sweep of 2D width or 3D height");
  add_common(sweep, f);
  sweep->add_option("--checkpoint", f.checkpoint, "Model checkpoint")->required();
  sweep->add_option("--which", f.which, "2d_width or 3d_height")
      ->required()
      ->check(CLI::IsMember({"2d_width", "3d_height"}));
  sweep->add_option("--sample", f.sample, "h,w,h1,w1,l1,theta_deg");
  sweep->add_option("--data", f.data, "Dataset file to take the sample from");
  sweep->add_option("--index", f.index, "Sample index in --data (default 0)");

  auto* predict = app.add_subcommand("predict", "Predict orientations");
  add_common(predict, f);
  predict->add_option("--checkpoint", f.checkpoint, "Model checkpoint")->required();
  predict->add_option("--data", f.data, "Dataset file");
  predict->add_option("--index", f.index, "Predict only this sample of --data");
  predict->add_option("--sample", f.sample, "h,w,h1,w1,l1,theta_deg");

  auto* invert = app.add_subcommand("invert", "Yaw candidates for given 2D and 3D dimensions");
  add_common(invert, f);
  invert->add_option("values", f.invert, "h w h1 w1 l1")->required()->expected(5);
  invert->add_flag("--oracle", f.oracle, "Cross-check against the brute-force grid oracle");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full model");
  add_common(gradcheck, f);

  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs");
  replay->add_option("--manifest", f.manifest, "manifest.json of the original run")->required();
  replay->add_option("--out", f.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    ffnet::CommandRequest req;
    req.command = app.get_subcommands().front()->get_name();
    if (!f.config.empty()) req.config = ffnet::Config::load(f.config);
    req.seed = f.seed;
    req.out_dir = f.out;
    auto set = [&](const char* key, const std::string& v) {
      if (!v.empty()) req.options[key] = v;
    };
    set("data", f.data);
    set("checkpoint", f.checkpoint);
    set("labels", f.labels);
    set("detections", f.detections);
    set("which", f.which);
    set("sample", f.sample);
    set("index", f.index);
    set("manifest", f.manifest);
    if (!f.invert.empty()) {
      std::string v;
      for (std::size_t i = 0; i < f.invert.size(); ++i) {
        v += (i ? "," : "") + ffnet::nn::format_double(f.invert[i]);
      }
      req.options["invert"] = v;
    }
    if (f.oracle) req.options["oracle"] = "true";
    return ffnet::run_command(req, std::cout).exit_code;
  } catch (const ffnet::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
