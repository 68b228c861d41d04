#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ffnet/commands.hpp"
#include "ffnet/error.hpp"
#include "ffnet/manifest.hpp"
#include "ffnet/synth.hpp"
#include "json.hpp"

using namespace ffnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(FFNET_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FFNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallConfig =
    "[synth]\nn = 300\nseed = 4\nbox_noise_sd = 1\n"
    "[model]\nencoder_width = 8\nproc_hidden = 6, 10\nhead_hidden = 12\nbatch_size = 8\n"
    "lr_schedule = 30:0.01, 10:0.001\n"
    "[compare]\nseeds = 1, 2\n";

CommandResult run(const std::string& command, const fs::path& out, CommandOptions options = {},
                  std::optional<Config> cfg = Config::parse_text(kSmallConfig)) {
  std::ostringstream log;
  return run_command({command, std::move(cfg), std::nullopt, out, std::move(options)}, log);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("sha256 of known strings") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("manifest json roundtrip") {
    RunManifest m;
    m.command = "train";
    m.config_snapshot = "[model]\nseed = 3\n";
    m.seed = 3;
    m.options = {{"data", "x.txt"}};
    m.inputs = {{"data", "x.txt", "ab", 12}};
    m.outputs = {{"checkpoint", "model.ckpt", "cd", 34}};
    const RunManifest back = RunManifest::from_json(m.to_json());
    CHECK(back.command == m.command);
    CHECK(back.config_snapshot == m.config_snapshot);
    CHECK(back.options == m.options);
    CHECK(back.inputs == m.inputs);
    CHECK(back.outputs == m.outputs);
    CHECK_THROWS_AS(RunManifest::from_json("{"), ValidationError);
  }

  TEST_CASE("gen is deterministic and checksums match") {
    const fs::path a = scratch("gen_a");
    const fs::path b = scratch("gen_b");
    const CommandResult ra = run("gen", a);
    run("gen", b);
    CHECK(slurp(a / "dataset.txt") == slurp(b / "dataset.txt"));
    const RunManifest m = read_manifest(a / "manifest.json");
    CHECK(m.command == "gen");
    CHECK(m.seed == 4);
    REQUIRE(m.outputs.size() == 2);
    for (const auto& o : m.outputs) CHECK(sha256_file(a / o.path) == o.sha256);
    CHECK(ra.exit_code == 0);
  }

  TEST_CASE("gen with n = 0 writes an empty dataset and a valid manifest") {
    const fs::path out = scratch("gen_empty");
    run("gen", out, {}, Config::parse_text("[synth]\nn = 0\n"));
    std::ifstream in(out / "dataset.txt");
    CHECK(read_dataset(in).empty());
    CHECK(read_manifest(out / "manifest.json").outputs.size() == 2);
  }

  TEST_CASE("commands that need a config refuse to run without one") {
    CHECK_THROWS_AS(run("gen", scratch("noconfig"), {}, std::nullopt), ValidationError);
  }

  TEST_CASE("train, predict, sweep, replay") {
    const fs::path g = scratch("pipe_gen");
    run("gen", g);
    const std::string data = (g / "dataset.txt").string();
    const fs::path t = scratch("pipe_train");
    run("train", t, {{"data", data}});
    CHECK(fs::exists(t / "model.ckpt"));
    CHECK(slurp(t / "loss_log.csv").rfind("step,lr,total,dims,orient,consistency\n", 0) == 0);
    const auto metrics = nlohmann::json::parse(slurp(t / "metrics.json"));
    CHECK(metrics["heldout_size"] == 60);

    const fs::path t2 = scratch("pipe_train2");
    run("train", t2, {{"data", data}});
    CHECK(slurp(t / "model.ckpt") == slurp(t2 / "model.ckpt"));

    const std::string ckpt = (t / "model.ckpt").string();
    const fs::path p = scratch("pipe_predict");
    run("predict", p, {{"checkpoint", ckpt}, {"data", data}, {"index", "5"}});
    const fs::path s = scratch("pipe_sweep");
    run("sweep", s, {{"checkpoint", ckpt}, {"data", data}, {"index", "5"}, {"which", "2d_width"}});
    std::istringstream pred(slurp(p / "predictions.csv"));
    std::istringstream sweep(slurp(s / "sweep_2d_width.csv"));
    std::string line;
    std::getline(pred, line);
    std::getline(pred, line);
    const std::string pred_theta = line.substr(2, line.find(',', 2) - 2);
    bool found = false;
    while (std::getline(sweep, line)) {
      if (line.rfind("1,", 0) == 0) {
        found = true;
        CHECK(line.substr(2, line.find(',', 2) - 2) == pred_theta);
      }
    }
    CHECK(found);

    const fs::path r = scratch("pipe_replay");
    CHECK(run("replay", r, {{"manifest", (t / "manifest.json").string()}}).exit_code == 0);
    CHECK(nlohmann::json::parse(slurp(r / "replay.json"))["identical"] == true);
    CHECK(slurp(r / "model.ckpt") == slurp(t / "model.ckpt"));
  }

  TEST_CASE("replay refuses changed inputs") {
    const fs::path g = scratch("replay_gen");
    run("gen", g);
    const fs::path copy = scratch("replay_data") / "d.txt";
    fs::copy_file(g / "dataset.txt", copy);
    const fs::path t = scratch("replay_train");
    run("train", t, {{"data", copy.string()}});
    std::ofstream(copy, std::ios::app) << "\n";
    CHECK_THROWS_AS(run("replay", scratch("replay_out"), {{"manifest", (t / "manifest.json").string()}}),
                    ValidationError);
  }

  TEST_CASE("compare emits four rows and matches independent train runs") {
    const fs::path g = scratch("cmp_gen");
    run("gen", g);
    const std::string data = (g / "dataset.txt").string();
    const fs::path c = scratch("cmp");
    run("compare", c, {{"data", data}});
    std::istringstream csv(slurp(c / "compare.csv"));
    std::string line;
    std::size_t rows = 0;
    std::getline(csv, line);
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 4);

    const auto report = nlohmann::json::parse(slurp(c / "compare.json"));
    const auto& plain_cons = report["rows"][3];
    CHECK(plain_cons["model"] == "plain");
    CHECK(plain_cons["consistency_loss"] == true);
    std::string cfg = kSmallConfig;
    cfg += "[model]\nuse_feedforward = false\nuse_consistency_loss = true\nseed = 2\n";
    const fs::path t = scratch("cmp_train");
    run("train", t, {{"data", data}}, Config::parse_text(cfg));
    const auto m = nlohmann::json::parse(slurp(t / "metrics.json"));
    CHECK(plain_cons["runs"][1]["heldout_loss"] == m["heldout_loss"]);
    CHECK(plain_cons["runs"][1]["heldout_mae_deg"] == m["heldout_mae_deg"]);
  }

  TEST_CASE("invert with oracle") {
    const fs::path out = scratch("invert");
    CHECK(run("invert", out, {{"invert", "86,33,1.68,0.50,0.42"}, {"oracle", "true"}}, std::nullopt).exit_code == 0);
    const auto j = nlohmann::json::parse(slurp(out / "invert.json"));
    CHECK(j["candidates_deg"].size() == 8);
    CHECK(j["oracle"]["agrees"] == true);
    run("invert", out, {{"invert", "86,80,1.68,0.50,0.42"}}, std::nullopt);
    const auto k = nlohmann::json::parse(slurp(out / "invert.json"));
    CHECK(k["infeasible"] == true);
    CHECK(k["candidates_deg"].empty());
  }

  TEST_CASE("eval on label files") {
    const fs::path dir = scratch("eval");
    fs::create_directories(dir / "labels");
    fs::create_directories(dir / "dets");
    std::ofstream(dir / "labels" / "000000.txt")
        << "Pedestrian 0.00 0 -2.02 100.0 150.0 133.0 236.0 1.68 0.50 0.42 2.1 1.4 8.0 -2.22\n"
           "Pedestrian 0.00 0 1.0 300.0 150.0 330.0 230.0 1.70 0.60 0.50 2.1 1.4 8.0 1.0\n"
           "DontCare -1 -1 -10 500 150 560 200 -1 -1 -1 -1000 -1000 -1000 -10\n";
    std::ofstream(dir / "dets" / "000000.txt")
        << "Pedestrian 0.00 0 -2.02 100.0 150.0 133.0 236.0 1.68 0.50 0.42 2.1 1.4 8.0 -2.22 0.9\n"
           "Pedestrian 0.00 0 1.0 300.0 150.0 330.0 230.0 1.70 0.60 0.50 2.1 1.4 8.0 -2.14159 0.8\n"
           "Pedestrian 0.00 0 1.0 510.0 160.0 540.0 200.0 1.70 0.60 0.50 2.1 1.4 8.0 0.0 0.7\n";
    const fs::path out = dir / "out";
    run("eval", out, {{"labels", (dir / "labels").string()}, {"detections", (dir / "dets").string()}},
        std::nullopt);
    const auto j = nlohmann::json::parse(slurp(out / "eval.json"));
    CHECK(j["easy"]["ap"].get<double>() == doctest::Approx(1.0));
    // Recall anchors 0..0.5 see similarity 1, anchors 0.6..1 see (1 + 0) / 2.
    CHECK(j["easy"]["aos"].get<double>() == doctest::Approx(8.5 / 11.0));
    CHECK(j["easy"]["false_positives"] == 0);
    CHECK(fs::exists(out / "os_recall_moderate.csv"));
    CHECK(fs::exists(out / "histogram.csv"));
  }

  TEST_CASE("gradcheck command") {
    const Config cfg = Config::parse_text(
        "[model]\nencoder_width = 8\nproc_hidden = 6, 10\nhead_hidden = 12\n[gradcheck]\nmax_per_layer = 0\n");
    const GradCheckOutcome ok = run_gradcheck(cfg);
    CHECK(ok.passed);
    CHECK(ok.report.per_layer.size() == 9);
    const GradCheckOutcome bad = run_gradcheck(cfg, [](nn::Gradients& g) { g.layers[0].bias(0) += 1.0; });
    CHECK_FALSE(bad.passed);
    const fs::path out = scratch("gradcheck");
    CHECK(run("gradcheck", out, {}, cfg).exit_code == 0);
    CHECK(nlohmann::json::parse(slurp(out / "gradcheck.json"))["layers"].size() == 9);
  }

  TEST_CASE("outputs stay inside the out directory") {
    const fs::path root = scratch("confined");
    const fs::path out = root / "out";
    run("gen", out);
    std::size_t outside = 0;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().parent_path() != out) ++outside;
    }
    CHECK(outside == 0);
  }

  TEST_CASE("executable exit codes") {
    const fs::path dir = scratch("exit");
    std::ofstream(dir / "c.cfg") << kSmallConfig;
    const std::string cfg = (dir / "c.cfg").string();
    const std::string out = (dir / "o").string();
    CHECK(run_cli("gen --config " + cfg + " --out " + out) == 0);
    CHECK(run_cli("gen --config " + cfg + " --seed 9 --out " + out) == 0);
    CHECK(read_manifest(fs::path(out) / "manifest.json").seed == 9);
    CHECK(run_cli("gen --out " + out) == 1);
    CHECK(run_cli("gen --config /nonexistent.cfg --out " + out) == 1);
    CHECK(run_cli("train --config " + cfg + " --data /nonexistent.txt --out " + out) == 1);
    CHECK(run_cli("invert 86 33 1.68 0.5 0.42 --oracle --out " + out) == 0);
    CHECK(run_cli("invert 86 -33 1.68 0.5 0.42 --out " + out) == 1);
    CHECK(run_cli("frobnicate") == 1);
    std::ofstream(dir / "bad.ckpt") << "ffnet-model 1\nconfig 1\n[model]\n";
    CHECK(run_cli("predict --checkpoint " + (dir / "bad.ckpt").string() + " --out " + out) != 0);
    std::ofstream(dir / "diverge.cfg") << kSmallConfig << "[model]\nlr_schedule = 200:1e6\ngrad_clip = 0\n";
    CHECK(run_cli("gen --config " + (dir / "diverge.cfg").string() + " --out " + out) == 0);
    CHECK(run_cli("train --config " + (dir / "diverge.cfg").string() + " --data " + out +
                  "/dataset.txt --out " + (dir / "t").string()) == 2);
  }
}
