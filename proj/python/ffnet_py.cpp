#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ffnet/binning.hpp"
#include "ffnet/commands.hpp"
#include "ffnet/error.hpp"
#include "ffnet/eval.hpp"
#include "ffnet/geometry.hpp"
#include "ffnet/model.hpp"
#include "ffnet/synth.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace ffnet;

namespace {

std::vector<double> radians(const std::vector<Orientation>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& o : v) out.push_back(o.radians());
  return out;
}

py::dict inversion_dict(const InversionResult& r) {
  return py::dict("candidates"_a = radians(r.candidates), "target"_a = r.target,
                  "infeasible"_a = r.infeasible, "exceeds_max_span"_a = r.exceeds_max_span);
}

}  // namespace

PYBIND11_MODULE(_ffnet, m) {
  m.doc() = "Pedestrian orientation with 2D/3D dimension feedforward";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DegenerateError>(m, "DegenerateError", PyExc_ArithmeticError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_FloatingPointError);

  m.def("wrap_angle", &wrap_angle, "radians"_a);
  m.def("circular_distance", &circular_distance, "a"_a, "b"_a);

  py::class_<Dims2D>(m, "Dims2D")
      .def(py::init([](double h, double w) { return Dims2D{h, w}; }), "h"_a, "w"_a)
      .def_readwrite("h", &Dims2D::h)
      .def_readwrite("w", &Dims2D::w)
      .def("__repr__", [](const Dims2D& d) {
        return "Dims2D(h=" + std::to_string(d.h) + ", w=" + std::to_string(d.w) + ")";
      });

  py::class_<Dims3D>(m, "Dims3D")
      .def(py::init([](double h1, double w1, double l1) { return Dims3D{h1, w1, l1}; }), "h1"_a,
           "w1"_a, "l1"_a)
      .def_readwrite("h1", &Dims3D::h1)
      .def_readwrite("w1", &Dims3D::w1)
      .def_readwrite("l1", &Dims3D::l1)
      .def("__repr__", [](const Dims3D& d) {
        return "Dims3D(h1=" + std::to_string(d.h1) + ", w1=" + std::to_string(d.w1) +
               ", l1=" + std::to_string(d.l1) + ")";
      });

  m.def(
      "width_span",
      [](const Dims3D& d, double theta) { return width_span(d, Orientation(theta)).meters; },
      "dims"_a, "theta"_a);
  m.def(
      "width_span_abs",
      [](const Dims3D& d, double theta) { return width_span_abs(d, Orientation(theta)).meters; },
      "dims"_a, "theta"_a);
  m.def(
      "implied_width_span",
      [](const Dims2D& d2, double h1) { return implied_width_span(d2, h1).meters; }, "d2"_a,
      "h1"_a);
  m.def(
      "consistency_residual",
      [](const Dims2D& d2, const Dims3D& d, double theta) {
        return consistency_residual(d2, d, Orientation(theta));
      },
      "d2"_a, "dims"_a, "theta"_a);
  m.def("max_width_span", &max_width_span, "dims"_a);
  m.def(
      "invert_orientation_candidates",
      [](const Dims2D& d2, const Dims3D& d) {
        return inversion_dict(invert_orientation_candidates(d2, d));
      },
      "d2"_a, "dims"_a);
  m.def(
      "brute_force_orientation_oracle",
      [](const Dims2D& d2, const Dims3D& d, double step) {
        return radians(brute_force_orientation_oracle(d2, d, step));
      },
      "d2"_a, "dims"_a, "grid_step"_a);

  m.def("decode_angle", &decode_angle, "sin_value"_a, "cos_value"_a);
  m.def(
      "encode_targets",
      [](double theta, std::size_t num_bins) {
        std::vector<std::pair<double, double>> out;
        for (const auto& p : encode_targets(Orientation(theta), BinConfig(num_bins))) {
          out.emplace_back(p.sin_value, p.cos_value);
        }
        return out;
      },
      "theta"_a, "num_bins"_a = 4);
  m.def(
      "bin_loss",
      [](std::pair<double, double> pred, std::pair<double, double> target) {
        return bin_loss({pred.first, pred.second}, {target.first, target.second});
      },
      "prediction"_a, "target"_a);
  m.def(
      "exclusion_vote",
      [](const std::vector<double>& angles, double tau) {
        const BinSet s = exclusion_vote(angles, tau);
        return std::vector<std::size_t>(s.begin(), s.end());
      },
      "angles"_a, "tau"_a = kDefaultExclusionTau);
  m.def(
      "aggregate_orientation",
      [](const std::vector<double>& angles, const std::vector<std::size_t>& excluded) {
        return aggregate_orientation(angles, BinSet(excluded.begin(), excluded.end())).radians();
      },
      "angles"_a, "excluded"_a = std::vector<std::size_t>{});

  m.def("orientation_similarity", &orientation_similarity, "theta_pred"_a, "theta_true"_a);
  m.def(
      "aos",
      [](const std::vector<std::tuple<double, double, double, double, double, double>>& dets,
         const std::vector<std::tuple<double, double, double, double, double>>& gts,
         double iou_threshold) {
        std::vector<Detection> d;
        for (const auto& [l, t, r, b, score, theta] : dets) d.push_back({{l, t, r, b}, score, theta});
        std::vector<GroundTruth> g;
        for (const auto& [l, t, r, b, theta] : gts) g.push_back({{l, t, r, b}, theta, false});
        const AosResult res = aos(d, g, iou_threshold);
        return py::dict("aos"_a = res.aos, "ap"_a = res.ap, "true_positives"_a = res.true_positives,
                        "false_positives"_a = res.false_positives);
      },
      "detections"_a, "ground_truth"_a, "iou_threshold"_a = 0.5,
      "Detections are (left, top, right, bottom, score, theta); ground truth omits score.");

  py::class_<TrainingSample>(m, "TrainingSample")
      .def(py::init([](const Dims2D& d2, const Dims3D& d3, double theta,
                       std::vector<double> context) {
             return TrainingSample{d2, d3, Orientation(theta), std::move(context)};
           }),
           "dims2d"_a, "dims3d"_a, "theta"_a, "context"_a)
      .def_readwrite("dims2d", &TrainingSample::dims2d)
      .def_readwrite("dims3d", &TrainingSample::dims3d)
      .def_property_readonly("theta", [](const TrainingSample& s) { return s.theta.radians(); })
      .def_readwrite("context", &TrainingSample::context);

  m.def(
      "gen_dataset",
      [](std::size_t n, std::uint64_t seed, double box_noise_sd, double context_noise) {
        SynthConfig c;
        c.n = n;
        c.seed = seed;
        c.box_noise_sd = box_noise_sd;
        c.context_noise = context_noise;
        return gen_dataset(c).samples;
      },
      "n"_a, "seed"_a = 1, "box_noise_sd"_a = 0.0, "context_noise"_a = 0.5);

  py::class_<FFNetDesk>(m, "FFNetDesk")
      .def(py::init([](const std::string& config_text) {
             return FFNetDesk(ModelConfig::from_config(Config::parse_text(config_text)));
           }),
           "config"_a = "", "[model] section text; missing keys keep defaults")
      .def_static(
          "load", [](const std::string& path) { return load_model_file(path); }, "path"_a)
      .def("save", [](const FFNetDesk& net, const std::string& path) { save_model_file(path, net); })
      .def("predict",
           [](const FFNetDesk& net, const TrainingSample& s) {
             const Prediction p = predict_orientation(net, s);
             return py::dict("theta"_a = p.theta.radians(), "per_bin_angles"_a = p.per_bin_angles,
                             "excluded"_a = std::vector<std::size_t>(p.excluded.begin(),
                                                                     p.excluded.end()),
                             "dims3d"_a = p.dims3d_pred);
           })
      .def("gradient_check",
           [](FFNetDesk& net, const std::vector<TrainingSample>& batch, double eps) {
             return gradient_check(net, batch, kAllTerms, eps).max_rel_error;
           },
           "batch"_a, "eps"_a = 1e-5)
      .def_property_readonly("num_parameters",
                             [](const FFNetDesk& net) { return net.params().parameter_count(); });

  m.def(
      "train",
      [](const std::vector<TrainingSample>& data, const std::string& config_text) {
        TrainResult r = train(data, ModelConfig::from_config(Config::parse_text(config_text)));
        std::vector<double> losses;
        for (const auto& row : r.log) losses.push_back(row.loss.total);
        return py::make_tuple(std::move(r.model), losses);
      },
      "data"_a, "config"_a = "", "Returns (model, per-step total loss).");
  m.def(
      "evaluate",
      [](const FFNetDesk& net, const std::vector<TrainingSample>& data) {
        const EvalSummary e = evaluate(net, data);
        return py::dict("heldout_loss"_a = e.heldout_loss, "dimensions"_a = e.dimensions,
                        "orientation"_a = e.orientation,
                        "mean_abs_error_deg"_a = e.mean_abs_error_deg,
                        "degenerate"_a = e.degenerate);
      },
      "model"_a, "data"_a);

  m.def(
      "run_command",
      [](const std::string& command, const std::filesystem::path& out_dir,
         std::optional<std::string> config_text, std::optional<std::uint64_t> seed,
         CommandOptions options) {
        CommandRequest req{command, std::nullopt, seed, out_dir, std::move(options)};
        if (config_text) req.config = Config::parse_text(*config_text);
        std::ostringstream log;
        const CommandResult r = run_command(req, log);
        return py::make_tuple(r.exit_code, log.str());
      },
      "command"_a, "out_dir"_a, "config"_a = py::none(), "seed"_a = py::none(),
      "options"_a = CommandOptions{}, "Returns (exit_code, log text).");
}
