#include "ffnet/commands.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ffnet/error.hpp"
#include "ffnet/eval.hpp"
#include "ffnet/geometry.hpp"
#include "ffnet/synth.hpp"
#include "json.hpp"

namespace ffnet {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::format_double;

namespace {

class Run {
 public:
  Run(const CommandRequest& req, std::ostream& log) : req_(req), log_(log) {
    if (req.out_dir.empty()) throw ValidationError(req.command + ": --out is required");
    cfg_ = req.config.value_or(Config{});
    if (req.seed) {
      cfg_.set("synth.seed", std::to_string(*req.seed));
      cfg_.set("model.seed", std::to_string(*req.seed));
    }
    manifest_.command = req.command;
    manifest_.config_snapshot = cfg_.serialize();
    manifest_.options = req.options;
    manifest_.started_utc = utc_timestamp();
    manifest_.tool_version = kToolVersion;
    start_ = std::chrono::steady_clock::now();
  }

  const Config& cfg() const { return cfg_; }
  std::ostream& log() { return log_; }
  RunManifest& manifest() { return manifest_; }

  void require_config() const {
    if (!req_.config) throw ValidationError(req_.command + ": --config is required");
  }

  bool has(const std::string& key) const { return req_.options.contains(key); }

  const std::string& option(const std::string& key) const {
    const auto it = req_.options.find(key);
    if (it == req_.options.end() || it->second.empty()) {
      throw ValidationError(req_.command + ": --" + key + " is required");
    }
    return it->second;
  }

  /// Records an input file and returns its path.
  std::string input(const std::string& role, const std::string& path) {
    if (!fs::is_regular_file(path)) {
      throw ValidationError(req_.command + ": " + role + " file '" + path + "' does not exist");
    }
    manifest_.inputs.push_back(describe_file(role, path, path));
    return path;
  }

  void output(const std::string& role, const std::string& name, const std::string& content) {
    fs::create_directories(req_.out_dir);
    const fs::path p = req_.out_dir / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + p.string() + "'");
    out << content;
    out.close();
    if (!out) throw Error("failed writing '" + p.string() + "'");
    manifest_.outputs.push_back({role, name, sha256_hex(content), content.size()});
  }

  CommandResult finish(int exit_code = 0) {
    manifest_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    fs::create_directories(req_.out_dir);
    write_manifest(req_.out_dir / "manifest.json", manifest_);
    return {exit_code, manifest_};
  }

 private:
  const CommandRequest& req_;
  std::ostream& log_;
  Config cfg_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json loss_json(const LossBreakdown& l) {
  return {{"total", l.total},
          {"dimensions", l.dimensions},
          {"orientation", l.orientation},
          {"consistency", l.consistency()}};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string join(const std::vector<double>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_double(v[i]);
  }
  return s;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    const auto b = tok.find_first_not_of(" \t");
    const auto e = tok.find_last_not_of(" \t");
    if (b == std::string::npos) throw ValidationError(what + ": empty value in '" + text + "'");
    out.push_back(nn::parse_double(tok.substr(b, e - b + 1), what));
  }
  return out;
}

std::size_t parse_index(const std::string& text) {
  const double v = nn::parse_double(text, "--index");
  if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw ValidationError("--index must be a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

ModelConfig model_config_for(const Config& cfg, const std::vector<TrainingSample>& data) {
  ModelConfig mc = ModelConfig::from_config(cfg);
  if (!cfg.has("model.context_width") && !data.empty()) {
    mc.context_width = data.front().context.size();
  }
  return mc;
}

json summary_json(const TrainOutcome& o) {
  const auto& cfg = o.trained.model.config();
  json j;
  j["model"] = cfg.use_feedforward ? "proposed" : "plain";
  j["use_consistency_loss"] = cfg.use_consistency_loss;
  j["seed"] = cfg.seed;
  j["steps"] = cfg.total_steps();
  j["train_size"] = o.train_size;
  j["heldout_size"] = o.heldout_size;
  j["heldout_loss"] = o.heldout.heldout_loss;
  j["heldout_dimensions"] = o.heldout.dimensions;
  j["heldout_orientation"] = o.heldout.orientation;
  j["heldout_mae_deg"] = o.heldout.mean_abs_error_deg;
  j["heldout_degenerate"] = o.heldout.degenerate;
  if (!o.trained.log.empty()) j["final_train_loss"] = loss_json(o.trained.log.back().loss);
  return j;
}

// ---------------------------------------------------------------------------------------

CommandResult cmd_gen(Run& run) {
  run.require_config();
  const SynthConfig sc = SynthConfig::from_config(run.cfg());
  const SynthDataset ds = gen_dataset(sc);
  run.manifest().seed = sc.seed;
  std::ostringstream data;
  write_dataset(data, ds.samples);
  std::ostringstream truth;
  write_truth(truth, ds.truth);
  run.output("dataset", "dataset.txt", data.str());
  run.output("truth", "truth.txt", truth.str());
  run.log() << "generated " << ds.samples.size() << " samples (seed " << sc.seed << ")\n";
  return run.finish();
}

CommandResult cmd_train(Run& run) {
  run.require_config();
  const auto data = read_dataset_file(run.input("data", run.option("data")));
  const ModelConfig mc = model_config_for(run.cfg(), data);
  run.manifest().seed = mc.seed;
  const double holdout = run.cfg().get_double("train.holdout_fraction", 0.2);
  const TrainOutcome o = train_and_evaluate(data, mc, holdout);

  std::ostringstream ckpt;
  save_model(ckpt, o.trained.model);
  std::ostringstream log;
  write_loss_log_csv(log, o.trained.log);
  run.output("checkpoint", "model.ckpt", ckpt.str());
  run.output("loss_log", "loss_log.csv", log.str());
  run.output("metrics", "metrics.json", dump(summary_json(o)));
  run.log() << "trained " << o.trained.log.size() << " steps; held-out loss "
            << format_double(o.heldout.heldout_loss) << ", mean abs error "
            << format_double(o.heldout.mean_abs_error_deg) << " deg\n";
  return run.finish();
}

CommandResult cmd_compare(Run& run) {
  run.require_config();
  const auto data = read_dataset_file(run.input("data", run.option("data")));
  const ModelConfig base = model_config_for(run.cfg(), data);
  const double holdout = run.cfg().get_double("train.holdout_fraction", 0.2);
  std::vector<std::uint64_t> seeds;
  for (double s : run.cfg().get_doubles("compare.seeds", {1, 2, 3})) {
    if (s < 0.0 || s != static_cast<double>(static_cast<std::uint64_t>(s))) {
      throw ValidationError("compare.seeds must be non-negative integers");
    }
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (seeds.empty()) throw ValidationError("compare.seeds is empty");
  run.manifest().seed = seeds.front();

  json rows = json::array();
  std::ostringstream csv;
  csv << "model,consistency_loss,median_heldout_loss,median_mae_deg,seeds,heldout_loss_per_seed,"
         "mae_deg_per_seed\n";
  std::map<std::string, double> medians;
  for (bool ff : {true, false}) {
    for (bool cons : {false, true}) {
      const std::string name = ff ? "proposed" : "plain";
      std::vector<double> losses;
      std::vector<double> maes;
      json per_seed = json::array();
      for (std::uint64_t seed : seeds) {
        ModelConfig mc = base;
        mc.use_feedforward = ff;
        mc.use_consistency_loss = cons;
        mc.seed = seed;
        const TrainOutcome o = train_and_evaluate(data, mc, holdout);
        losses.push_back(o.heldout.heldout_loss);
        maes.push_back(o.heldout.mean_abs_error_deg);
        per_seed.push_back(summary_json(o));
        run.log() << name << (cons ? " +consistency" : "") << " seed " << seed
                  << ": held-out loss " << format_double(o.heldout.heldout_loss) << ", mae "
                  << format_double(o.heldout.mean_abs_error_deg) << " deg\n";
      }
      const double ml = median(losses);
      const double mm = median(maes);
      medians[name + (cons ? "+c" : "")] = ml;
      std::string seed_list;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        seed_list += (i ? ";" : "") + std::to_string(seeds[i]);
      }
      csv << name << ',' << (cons ? "on" : "off") << ',' << format_double(ml) << ','
          << format_double(mm) << ',' << seed_list << ',' << join(losses, ';') << ','
          << join(maes, ';') << '\n';
      rows.push_back({{"model", name},
                      {"consistency_loss", cons},
                      {"median_heldout_loss", ml},
                      {"median_mae_deg", mm},
                      {"runs", per_seed}});
    }
  }
  json out;
  out["seeds"] = seeds;
  out["rows"] = rows;
  out["validation_loss_terms"] = {"dimensions", "orientation"};
  out["findings"] = {
      {"proposed_below_plain", medians["proposed"] < medians["plain"]},
      {"consistency_improves_proposed", medians["proposed+c"] < medians["proposed"]},
      {"consistency_improves_plain", medians["plain+c"] < medians["plain"]},
  };
  run.output("table", "compare.csv", csv.str());
  run.output("report", "compare.json", dump(out));
  return run.finish();
}

// Evaluation ----------------------------------------------------------------------------

struct FramePair {
  std::string name;
  std::vector<ObjectLabel> labels;
  std::vector<ObjectLabel> detections;
};

std::vector<FramePair> load_frames(Run& run, const std::string& labels,
                                   const std::string& detections) {
  std::vector<FramePair> frames;
  if (fs::is_directory(labels)) {
    if (!fs::is_directory(detections)) {
      throw ValidationError("eval: --labels is a directory, so --detections must be one too");
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(labels)) {
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      FramePair fp;
      fp.name = f.filename().string();
      fp.labels = read_label_file(run.input("labels", f.string())).labels;
      const fs::path d = fs::path(detections) / f.filename();
      if (fs::is_regular_file(d)) {
        fp.detections = read_label_file(run.input("detections", d.string())).labels;
      }
      frames.push_back(std::move(fp));
    }
  } else {
    FramePair fp;
    fp.name = fs::path(labels).filename().string();
    fp.labels = read_label_file(run.input("labels", labels)).labels;
    fp.detections = read_label_file(run.input("detections", detections)).labels;
    frames.push_back(std::move(fp));
  }
  for (const auto& f : frames) {
    for (const auto& d : f.detections) {
      if (!d.is_dont_care() && !d.score) {
        throw ValidationError("eval: detection in '" + f.name + "' has no score column");
      }
    }
  }
  return frames;
}

/// Tier t (0 easy, 1 moderate, 2 hard) counts ground truths of difficulty <= t; harder,
/// ignored-difficulty and neighbouring-class objects are present but not counted.
/// Detections shorter than the tier's minimum height are dropped, as the benchmark does.
std::vector<Frame> frames_for_tier(const std::vector<FramePair>& pairs, const std::string& cls,
                                   int tier) {
  constexpr std::array<double, 3> kMinHeight{40.0, 25.0, 25.0};
  const std::string neighbour = cls == "Pedestrian" ? "Person_sitting" : (cls == "Car" ? "Van" : "");
  std::vector<Frame> frames;
  for (const auto& p : pairs) {
    Frame f;
    for (const auto& l : p.labels) {
      if (l.is_dont_care()) {
        f.dont_care.push_back(l.box2d);
      } else if (l.class_name == cls || (!neighbour.empty() && l.class_name == neighbour)) {
        const Difficulty d = classify_difficulty(l);
        const bool counted = l.class_name == cls && d != Difficulty::Ignored &&
                             static_cast<int>(d) <= tier;
        f.ground_truth.push_back({l.box2d, l.rotation_y, !counted});
      }
    }
    for (const auto& d : p.detections) {
      if (d.class_name != cls || d.box2d.height() < kMinHeight[static_cast<std::size_t>(tier)]) {
        continue;
      }
      f.detections.push_back({d.box2d, *d.score, d.rotation_y});
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

CommandResult cmd_eval(Run& run) {
  const std::string labels = run.option("labels");
  const std::string detections = run.option("detections");
  if (!fs::exists(labels)) throw ValidationError("eval: '" + labels + "' does not exist");
  if (!fs::exists(detections)) throw ValidationError("eval: '" + detections + "' does not exist");
  const auto pairs = load_frames(run, labels, detections);
  const std::string cls = run.cfg().get_string("eval.class", "Pedestrian");
  const double iou_threshold = run.cfg().get_double("eval.iou_threshold", 0.5);
  const double bin_width = run.cfg().get_double("eval.histogram_bin_deg", 10.0);
  if (!(bin_width > 0.0) || bin_width > 180.0) {
    throw ValidationError("eval.histogram_bin_deg must be in (0, 180]");
  }

  json report;
  report["class"] = cls;
  report["iou_threshold"] = iou_threshold;
  report["frames"] = pairs.size();
  std::vector<std::optional<EvalReport>> tiers;
  const std::array<const char*, 3> names{"easy", "moderate", "hard"};
  for (int t = 0; t < 3; ++t) {
    const auto frames = frames_for_tier(pairs, cls, t);
    try {
      EvalReport r = make_report(names[t], aos(frames, iou_threshold), bin_width);
      json j;
      j["aos"] = r.result.aos;
      j["ap"] = r.result.ap;
      j["num_gt"] = r.result.num_gt;
      j["true_positives"] = r.result.true_positives;
      j["false_positives"] = r.result.false_positives;
      j["mean_abs_angular_error_deg"] = r.mean_abs_angular_error;
      j["histogram"] = r.histogram;
      report[names[t]] = j;
      std::ostringstream curve;
      curve << "score,recall,precision,os\n";
      for (const auto& c : r.result.curve) {
        curve << format_double(c.score) << ',' << format_double(c.recall) << ','
              << format_double(c.precision) << ',' << format_double(c.os) << '\n';
      }
      run.output("os_recall", std::string("os_recall_") + names[t] + ".csv", curve.str());
      run.log() << names[t] << ": AOS " << format_double(r.result.aos) << ", AP "
                << format_double(r.result.ap) << " over " << r.result.num_gt << " objects\n";
      tiers.push_back(std::move(r));
    } catch (const ValidationError&) {
      report[names[t]] = nullptr;
      run.log() << names[t] << ": no ground truth\n";
      tiers.push_back(std::nullopt);
    }
  }
  if (std::none_of(tiers.begin(), tiers.end(), [](const auto& t) { return t.has_value(); })) {
    throw ValidationError("eval: no " + cls + " ground truth in any difficulty tier");
  }

  std::ostringstream hist;
  hist << "bin_lo_deg,bin_hi_deg,easy,moderate,hard\n";
  const std::size_t nbins = error_histogram({}, bin_width).size();
  for (std::size_t b = 0; b < nbins; ++b) {
    hist << format_double(static_cast<double>(b) * bin_width) << ','
         << format_double(std::min(180.0, static_cast<double>(b + 1) * bin_width));
    for (const auto& t : tiers) hist << ',' << (t ? t->histogram[b] : 0);
    hist << '\n';
  }
  run.output("histogram", "histogram.csv", hist.str());
  run.output("report", "eval.json", dump(report));
  return run.finish();
}

// Model inspection ---------------------------------------------------------------------

TrainingSample resolve_sample(Run& run, const FFNetDesk& model) {
  const std::size_t width = model.config().context_width;
  if (run.has("data")) {
    const auto data = read_dataset_file(run.input("data", run.option("data")));
    const std::size_t index = run.has("index") ? parse_index(run.option("index")) : 0;
    if (index >= data.size()) {
      throw ValidationError("--index " + std::to_string(index) + " is out of range (dataset has " +
                            std::to_string(data.size()) + " samples)");
    }
    return data[index];
  }
  const SynthConfig sc = SynthConfig::from_config(run.cfg());
  const std::string spec = run.has("sample") ? run.option("sample") : kExemplarSample;
  return parse_sample_spec(spec, sc, width, sc.seed);
}

CommandResult cmd_sweep(Run& run) {
  const FFNetDesk model = load_model_file(run.input("checkpoint", run.option("checkpoint")));
  const SweepKind kind = sweep_kind_from_string(run.option("which"));
  const TrainingSample sample = resolve_sample(run, model);
  const auto factors = default_sweep_factors(run.cfg().get_uint("sweep.points", 20),
                                             run.cfg().get_double("sweep.min", 0.1),
                                             run.cfg().get_double("sweep.max", 2.0));
  const auto rows = kind == SweepKind::Width2D ? sweep_2d_width(model, sample, factors)
                                               : sweep_3d_height(model, sample, factors);
  std::ostringstream csv;
  write_sweep_csv(csv, rows, model.config().num_bins);
  run.output("sweep", std::string("sweep_") + to_string(kind) + ".csv", csv.str());
  run.manifest().seed = model.config().seed;

  const auto first = std::find_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.theta_pred.has_value(); });
  const auto last = std::find_if(rows.rbegin(), rows.rend(), [](const SweepRow& r) { return r.theta_pred.has_value(); });
  if (first != rows.end()) {
    run.log() << to_string(kind) << " sweep: model theta " << format_double(rad_to_deg(*first->theta_pred))
              << " deg at factor " << format_double(first->factor) << " -> "
              << format_double(rad_to_deg(*last->theta_pred)) << " deg at factor "
              << format_double(last->factor) << "\n";
  }
  return run.finish();
}

CommandResult cmd_predict(Run& run) {
  const FFNetDesk model = load_model_file(run.input("checkpoint", run.option("checkpoint")));
  run.manifest().seed = model.config().seed;
  std::vector<TrainingSample> samples;
  if (run.has("data") && !run.has("index")) {
    samples = read_dataset_file(run.input("data", run.option("data")));
  } else {
    samples.push_back(resolve_sample(run, model));
  }
  const std::size_t nb = model.config().num_bins;
  std::ostringstream csv;
  csv << "index,theta_pred_deg,theta_true_deg,abs_error_deg";
  for (std::size_t i = 0; i < nb; ++i) csv << ",bin" << i << "_deg";
  csv << ",excluded,h1_pred,w1_pred,l1_pred\n";
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const ForwardResult r = model.forward(samples[k]);
    const double truth = samples[k].theta.radians();
    csv << k << ',';
    if (r.theta_pred) {
      csv << format_double(rad_to_deg(r.theta_pred->radians()));
      pairs.emplace_back(r.theta_pred->radians(), truth);
    }
    csv << ',' << format_double(rad_to_deg(truth)) << ',';
    if (r.theta_pred) {
      csv << format_double(rad_to_deg(circular_distance(r.theta_pred->radians(), truth)));
    }
    for (std::size_t i = 0; i < nb; ++i) {
      csv << ',';
      if (i < r.per_bin_angles.size()) csv << format_double(rad_to_deg(r.per_bin_angles[i]));
    }
    csv << ',';
    bool firstx = true;
    for (std::size_t i : r.excluded) {
      csv << (firstx ? "" : ";") << i;
      firstx = false;
    }
    csv << ',' << format_double(r.dims3d_pred.h1) << ',' << format_double(r.dims3d_pred.w1) << ','
        << format_double(r.dims3d_pred.l1) << '\n';
  }
  run.output("predictions", "predictions.csv", csv.str());
  run.log() << "predicted " << samples.size() << " samples";
  if (!pairs.empty()) {
    run.log() << "; mean abs error " << format_double(mean_abs_angular_error_deg(pairs)) << " deg";
  }
  run.log() << "\n";
  return run.finish();
}

CommandResult cmd_invert(Run& run) {
  const auto v = parse_numbers(run.option("invert"), "invert inputs");
  if (v.size() != 5) throw ValidationError("invert needs exactly 5 values: h w h1 w1 l1");
  const Dims2D d2{v[0], v[1]};
  const Dims3D d3{v[2], v[3], v[4]};
  validate(d2);
  validate(d3);
  const InversionResult inv = invert_orientation_candidates(d2, d3);

  json j;
  j["inputs"] = {{"h", d2.h}, {"w", d2.w}, {"h1", d3.h1}, {"w1", d3.w1}, {"l1", d3.l1}};
  j["target_width_span"] = inv.target;
  j["max_width_span"] = max_width_span(d3);
  j["infeasible"] = inv.infeasible;
  j["exceeds_max_span"] = inv.exceeds_max_span;
  std::vector<double> deg;
  std::vector<double> rad;
  for (const auto& c : inv.candidates) {
    rad.push_back(c.radians());
    deg.push_back(c.degrees());
  }
  j["candidates_rad"] = rad;
  j["candidates_deg"] = deg;

  run.log() << "target width span " << format_double(inv.target) << " m";
  if (inv.infeasible) run.log() << " (infeasible)";
  run.log() << "\n";
  for (double d : deg) run.log() << "candidate " << format_double(d) << " deg\n";

  int exit_code = 0;
  if (run.has("oracle")) {
    const double step_deg = run.cfg().get_double("invert.oracle_step_deg", 0.001);
    const double tol_deg = run.cfg().get_double("invert.oracle_tolerance_deg", 0.01);
    const auto oracle = brute_force_orientation_oracle(d2, d3, deg_to_rad(step_deg));
    bool agree = oracle.size() == inv.candidates.size();
    for (std::size_t i = 0; agree && i < oracle.size(); ++i) {
      agree = rad_to_deg(circular_distance(oracle[i].radians(), inv.candidates[i].radians())) <= tol_deg;
    }
    std::vector<double> odeg;
    for (const auto& o : oracle) odeg.push_back(o.degrees());
    j["oracle"] = {{"step_deg", step_deg}, {"tolerance_deg", tol_deg}, {"candidates_deg", odeg},
                   {"agrees", agree}};
    run.log() << "oracle cross-check: " << (agree ? "agrees" : "DISAGREES") << " ("
              << oracle.size() << " oracle candidates)\n";
    if (!agree) exit_code = 2;
  }
  run.output("report", "invert.json", dump(j));
  return run.finish(exit_code);
}

CommandResult cmd_gradcheck(Run& run) {
  const GradCheckOutcome g = run_gradcheck(run.cfg());
  run.manifest().seed = ModelConfig::from_config(run.cfg()).seed;
  json j;
  j["passed"] = g.passed;
  j["max_rel_error"] = g.report.max_rel_error;
  j["threshold"] = g.settings.threshold;
  j["eps"] = g.settings.eps;
  j["samples"] = g.settings.samples;
  j["max_per_layer"] = g.settings.max_per_layer;
  json layers = json::array();
  for (const auto& l : g.report.per_layer) {
    layers.push_back({{"layer", l.layer}, {"max_rel_error", l.max_rel_error}, {"checked", l.checked}});
    run.log() << "  " << l.layer << ": max rel error " << format_double(l.max_rel_error) << " over "
              << l.checked << " entries\n";
  }
  j["layers"] = layers;
  run.log() << "gradcheck " << (g.passed ? "PASS" : "FAIL") << ": worst relative error "
            << format_double(g.report.max_rel_error) << " (threshold "
            << format_double(g.settings.threshold) << ")\n";
  run.output("report", "gradcheck.json", dump(j));
  return run.finish(g.passed ? 0 : 2);
}

CommandResult cmd_replay(const CommandRequest& req, std::ostream& log) {
  const auto it = req.options.find("manifest");
  if (it == req.options.end() || it->second.empty()) {
    throw ValidationError("replay: --manifest is required");
  }
  if (req.out_dir.empty()) throw ValidationError("replay: --out is required");
  const RunManifest original = read_manifest(it->second);
  if (original.command == "replay") throw ValidationError("replay: cannot replay a replay");
  for (const auto& in : original.inputs) {
    if (!fs::is_regular_file(in.path) || sha256_file(in.path) != in.sha256) {
      throw ValidationError("replay: input '" + in.path + "' is missing or has changed");
    }
  }
  CommandRequest again;
  again.command = original.command;
  again.config = Config::parse_text(original.config_snapshot);
  again.out_dir = req.out_dir;
  again.options = original.options;
  const CommandResult r = run_command(again, log);

  std::size_t mismatches = 0;
  json report;
  report["manifest"] = it->second;
  report["command"] = original.command;
  json files = json::array();
  for (const auto& o : original.outputs) {
    const auto found = std::find_if(r.manifest.outputs.begin(), r.manifest.outputs.end(),
                                    [&](const FileRecord& x) { return x.path == o.path; });
    const bool same = found != r.manifest.outputs.end() && found->sha256 == o.sha256;
    if (!same) ++mismatches;
    files.push_back({{"path", o.path}, {"identical", same}});
    log << "replay " << o.path << ": " << (same ? "identical" : "DIFFERS") << "\n";
  }
  report["outputs"] = files;
  report["identical"] = mismatches == 0 && r.manifest.outputs.size() == original.outputs.size();
  std::ofstream(req.out_dir / "replay.json") << dump(report);
  return {report["identical"].get<bool>() ? r.exit_code : 2, r.manifest};
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen",    "train",  "compare",   "eval",  "sweep",
                                              "predict", "invert", "gradcheck", "replay"};
  return names;
}

CommandResult run_command(const CommandRequest& request, std::ostream& log) {
  if (request.command == "replay") return cmd_replay(request, log);
  Run run(request, log);
  const std::string& c = request.command;
  if (c == "gen") return cmd_gen(run);
  if (c == "train") return cmd_train(run);
  if (c == "compare") return cmd_compare(run);
  if (c == "eval") return cmd_eval(run);
  if (c == "sweep") return cmd_sweep(run);
  if (c == "predict") return cmd_predict(run);
  if (c == "invert") return cmd_invert(run);
  if (c == "gradcheck") return cmd_gradcheck(run);
  throw ValidationError("unknown command '" + c + "'");
}

TrainOutcome train_and_evaluate(const std::vector<TrainingSample>& data, const ModelConfig& cfg,
                                double holdout_fraction) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ValidationError("train.holdout_fraction must be in [0, 1)");
  }
  auto [train_set, heldout] = split_holdout(data, holdout_fraction);
  TrainOutcome o{train(train_set, cfg), {}, train_set.size(), heldout.size()};
  if (!heldout.empty()) o.heldout = evaluate(o.trained.model, heldout);
  return o;
}

TrainingSample parse_sample_spec(const std::string& spec, const SynthConfig& synth,
                                 std::size_t context_width, std::uint64_t seed) {
  const auto v = parse_numbers(spec, "sample spec");
  if (v.size() != 5 && v.size() != 6) {
    throw ValidationError("sample spec needs 5 or 6 values: h,w,h1,w1,l1[,theta_deg]");
  }
  TrainingSample s;
  s.dims2d = {v[0], v[1]};
  s.dims3d = {v[2], v[3], v[4]};
  validate(s.dims2d);
  validate(s.dims3d);
  s.theta = Orientation::from_degrees(v.size() == 6 ? v[5] : 0.0);
  SynthConfig sc = synth;
  sc.context_width = context_width;
  s.context = make_context(sc, s.dims3d, s.theta, seed);
  return s;
}

GradCheckOutcome run_gradcheck(const Config& cfg, const std::function<void(nn::Gradients&)>& tamper) {
  GradCheckOutcome out;
  auto& st = out.settings;
  st.eps = cfg.get_double("gradcheck.eps", st.eps);
  st.threshold = cfg.get_double("gradcheck.threshold", st.threshold);
  st.samples = cfg.get_uint("gradcheck.samples", st.samples);
  st.max_per_layer = cfg.get_uint("gradcheck.max_per_layer", 64);
  if (st.samples == 0) throw ValidationError("gradcheck.samples must be positive");

  ModelConfig mc = ModelConfig::from_config(cfg);
  mc.use_consistency_loss = cfg.get_bool("gradcheck.consistency", true);
  SynthConfig sc = SynthConfig::from_config(cfg);
  sc.n = st.samples;
  sc.context_width = mc.context_width;
  sc.box_noise_sd = cfg.get_double("gradcheck.box_noise_sd", 0.5);
  sc.seed = cfg.get_uint("gradcheck.seed", 7);
  const auto data = gen_dataset(sc).samples;

  FFNetDesk model(mc);
  out.report = gradient_check(model, data, kAllTerms, st.eps, st.max_per_layer, tamper);
  out.passed = out.report.max_rel_error < st.threshold;
  return out;
}

}  // namespace ffnet
