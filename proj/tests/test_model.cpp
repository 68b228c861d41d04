#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ffnet/error.hpp"
#include "ffnet/model.hpp"
#include "ffnet/synth.hpp"

using namespace ffnet;

namespace {

ModelConfig small_config(bool feedforward = true) {
  ModelConfig m;
  m.encoder_width = 8;
  m.proc_hidden = {6, 10};
  m.head_hidden = 12;
  m.use_feedforward = feedforward;
  m.lr_schedule = {{40, 1e-2}, {20, 1e-3}};
  m.batch_size = 8;
  return m;
}

std::vector<TrainingSample> samples(std::size_t n, std::uint64_t seed = 1, double box_noise = 0.0) {
  SynthConfig c;
  c.n = n;
  c.seed = seed;
  c.box_noise_sd = box_noise;
  return gen_dataset(c).samples;
}

std::vector<const TrainingSample*> ptrs(const std::vector<TrainingSample>& v) {
  std::vector<const TrainingSample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("layer shapes follow the configuration") {
    const FFNetDesk proposed{ModelConfig{}};
    CHECK(proposed.config().concat_width() == 64 + 2048 + 2048);
    const auto& p = proposed.params();
    CHECK(p.layer(proposed.dims_layer()).spec.out_width == 3);
    CHECK(p.layer(proposed.proc2d_layers().front()).spec.in_width == 2);
    CHECK(p.layer(proposed.proc2d_layers().back()).spec.out_width == 2048);
    CHECK(p.layer(proposed.proc3d_layers().front()).spec.in_width == 3);
    CHECK(p.layer(proposed.head_layers().front()).spec.in_width == 64 + 2048 + 2048);
    CHECK(p.layer(proposed.head_layers().back()).spec.out_width == 8);
    CHECK(p.layer(proposed.head_layers().back()).spec.activation == nn::Activation::Linear);

    ModelConfig plain_cfg;
    plain_cfg.use_feedforward = false;
    const FFNetDesk plain(plain_cfg);
    CHECK(plain.config().concat_width() == 64);
    CHECK(plain.proc2d_layers().empty());
    CHECK(plain.proc3d_layers().empty());
  }

  TEST_CASE("context width mismatch is rejected") {
    const FFNetDesk m(small_config());
    TrainingSample s = samples(1)[0];
    s.context.pop_back();
    CHECK_THROWS_AS(m.forward(s), ValidationError);
  }

  TEST_CASE("zero head gives a degenerate result") {
    FFNetDesk m(small_config());
    auto& head = m.params().layer(m.head_layers().back()).params;
    head.weights.setZero();
    head.bias.setZero();
    const ForwardResult r = m.forward(samples(1)[0]);
    CHECK(r.degenerate);
    CHECK_FALSE(r.theta_pred.has_value());
    CHECK_THROWS_AS(predict_orientation(m, samples(1)[0]), DegenerateError);
  }

  TEST_CASE("plain model ignores box and dimension inputs") {
    const FFNetDesk m(small_config(false));
    TrainingSample s = samples(1)[0];
    const ForwardResult a = m.forward(s);
    s.dims2d = {s.dims2d.h * 3, s.dims2d.w * 0.2};
    s.dims3d = {2.0, 0.9, 0.1};
    const ForwardResult b = m.forward(s, {{Dims3D{5, 5, 5}}});
    for (std::size_t i = 0; i < a.bin_outputs.size(); ++i) {
      CHECK(a.bin_outputs[i].sin_value == b.bin_outputs[i].sin_value);
      CHECK(a.bin_outputs[i].cos_value == b.bin_outputs[i].cos_value);
    }
  }

  TEST_CASE("proposed model reacts to the 2D box") {
    const FFNetDesk m(small_config(true));
    TrainingSample s = samples(1)[0];
    const ForwardResult a = m.forward(s);
    s.dims2d.w *= 1.5;
    const ForwardResult b = m.forward(s);
    double diff = 0;
    for (std::size_t i = 0; i < a.bin_outputs.size(); ++i) {
      diff += std::abs(a.bin_outputs[i].sin_value - b.bin_outputs[i].sin_value);
    }
    CHECK(diff > 0.0);
  }

  TEST_CASE("loss examples") {
    ModelConfig cfg = small_config();
    const TrainingSample s = samples(1)[0];
    const BinConfig bins(cfg.num_bins);
    ForwardResult r;
    r.dims3d_pred = s.dims3d;
    r.bin_outputs = encode_targets(s.theta, bins);
    r.per_bin_angles = per_bin_global_angles(r.bin_outputs, bins);
    r.theta_pred = s.theta;
    CHECK(total_loss(r, s, cfg).total == doctest::Approx(0.0).epsilon(1e-12));

    cfg.use_consistency_loss = true;
    const LossBreakdown c = total_loss(r, s, cfg);
    CHECK(c.consistency_dims < 1e-18);
    CHECK(c.consistency_orientation < 1e-18);

    cfg.use_consistency_loss = false;
    for (auto& p : r.bin_outputs) p = {-p.sin_value, -p.cos_value};
    r.per_bin_angles = per_bin_global_angles(r.bin_outputs, bins);
    CHECK(total_loss(r, s, cfg).total == doctest::Approx(8.0));
    CHECK(total_loss(r, s, cfg).orientation == doctest::Approx(8.0));
  }

  TEST_CASE("loss decomposition is exact at every logged step") {
    ModelConfig cfg = small_config();
    cfg.use_consistency_loss = true;
    const TrainResult r = train(samples(200, 2, 1.0), cfg);
    REQUIRE(r.log.size() == cfg.total_steps());
    for (const auto& row : r.log) {
      const auto& l = row.loss;
      CHECK(l.total == l.dimensions + l.orientation + l.consistency_dims + l.consistency_orientation);
    }
  }

  TEST_CASE("full-graph gradient check") {
    ModelConfig cfg = small_config();
    cfg.use_consistency_loss = true;
    FFNetDesk m(cfg);
    const auto report = gradient_check(m, samples(3, 4, 0.5));
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.per_layer.size() == m.params().layers().size());

    ModelConfig tf = small_config();
    tf.teacher_force_dims = true;
    FFNetDesk t(tf);
    CHECK(gradient_check(t, samples(3, 5)).max_rel_error < 1e-4);
  }

  TEST_CASE("a corrupted backward is caught") {
    FFNetDesk m(small_config());
    const auto report = gradient_check(m, samples(3, 4), kAllTerms, 1e-5, 0, [](nn::Gradients& g) {
      g.layers[1].weights(0, 0) += 0.05;
    });
    CHECK(report.max_rel_error > 1e-4);
  }

  TEST_CASE("orientation loss never reaches the dimension regressor") {
    const FFNetDesk m(small_config());
    const auto data = samples(16, 6, 1.0);
    nn::Gradients g = nn::Gradients::zeros_like(m.params());
    m.gradients(ptrs(data), kTermOrientation, g);
    CHECK(g.abs_sum(m.dims_layer()) == 0.0);
    double head = 0;
    for (auto id : m.head_layers()) head += g.abs_sum(id);
    CHECK(head > 0.0);
    double proc = 0;
    for (auto id : m.proc3d_layers()) proc += g.abs_sum(id);
    CHECK(proc > 0.0);

    nn::Gradients d = nn::Gradients::zeros_like(m.params());
    m.gradients(ptrs(data), kTermDimensions, d);
    for (auto id : m.head_layers()) CHECK(d.abs_sum(id) == 0.0);
    for (auto id : m.proc3d_layers()) CHECK(d.abs_sum(id) == 0.0);
    CHECK(d.abs_sum(m.dims_layer()) > 0.0);
  }

  TEST_CASE("training is deterministic") {
    const auto data = samples(100, 7, 1.0);
    const ModelConfig cfg = small_config();
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    CHECK(a.model == b.model);
    std::ostringstream la;
    std::ostringstream lb;
    write_loss_log_csv(la, a.log);
    write_loss_log_csv(lb, b.log);
    CHECK(la.str() == lb.str());
    ModelConfig other = cfg;
    other.seed = 2;
    CHECK_FALSE(train(data, other).model == a.model);
  }

  TEST_CASE("a single sample can be memorised") {
    ModelConfig cfg = small_config();
    cfg.lr_schedule = {{1500, 5e-3}};
    cfg.batch_size = 1;
    const TrainResult r = train(samples(1, 8), cfg);
    CHECK(r.log.back().loss.total < 1e-3);
  }

  TEST_CASE("gradient clipping bounds the first step") {
    ModelConfig cfg = small_config();
    cfg.use_consistency_loss = true;
    cfg.momentum = 0.0;
    cfg.lr_schedule = {{1, 0.5}};
    const auto data = samples(8, 3, 1.0);
    const FFNetDesk init(cfg);
    auto step_norm = [&](double clip) {
      ModelConfig c = cfg;
      c.grad_clip = clip;
      const TrainResult r = train(data, c);
      double sq = 0.0;
      for (std::size_t i = 0; i < init.params().layers().size(); ++i) {
        const auto& a = init.params().layer(i).params;
        const auto& b = r.model.params().layer(i).params;
        sq += (a.weights - b.weights).squaredNorm() + (a.bias - b.bias).squaredNorm();
      }
      return std::pair{std::sqrt(sq), r.log.front().grad_norm};
    };
    const auto [free_step, norm] = step_norm(0.0);
    CHECK(free_step == doctest::Approx(0.5 * norm));
    REQUIRE(norm > 1.0);
    CHECK(step_norm(1.0).first == doctest::Approx(0.5));
    CHECK(step_norm(2.0 * norm).first == doctest::Approx(free_step));
  }

  TEST_CASE("non-finite training halts with the step") {
    ModelConfig cfg = small_config();
    cfg.lr_schedule = {{200, 1e6}};
    cfg.grad_clip = 0.0;
    try {
      train(samples(50, 9, 1.0), cfg);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
    CHECK_THROWS_AS(train({}, cfg), ValidationError);
  }

  TEST_CASE("checkpoint roundtrip preserves forward bit for bit") {
    ModelConfig cfg = small_config();
    cfg.use_consistency_loss = true;
    cfg.exclusion_tau = 0.3;
    const TrainResult r = train(samples(60, 10, 1.0), cfg);
    std::stringstream ss;
    save_model(ss, r.model);
    const FFNetDesk back = load_model(ss);
    CHECK(back == r.model);
    CHECK(back.config().exclusion_tau == 0.3);
    for (const auto& s : samples(20, 11)) {
      const ForwardResult a = r.model.forward(s);
      const ForwardResult b = back.forward(s);
      CHECK(a.theta_pred->radians() == b.theta_pred->radians());
      CHECK(a.dims3d_pred == b.dims3d_pred);
    }
    std::istringstream junk("ffnet-model 2\n");
    CHECK_THROWS_AS(load_model(junk), ValidationError);
  }

  TEST_CASE("held-out split and evaluation") {
    const auto data = samples(10);
    const auto [tr, te] = split_holdout(data, 0.2);
    CHECK(tr.size() == 8);
    CHECK(te.size() == 2);
    CHECK(te[0].dims2d == data[8].dims2d);
    const FFNetDesk m(small_config());
    const EvalSummary e = evaluate(m, te);
    CHECK(e.heldout_loss == doctest::Approx(e.dimensions + e.orientation));
    CHECK(e.angle_pairs.size() == 2);
  }

  TEST_CASE("sweeps") {
    const auto factors = default_sweep_factors();
    REQUIRE(factors.size() == 20);
    CHECK(factors.front() == 0.1);
    CHECK(factors.back() == 2.0);
    CHECK(std::count(factors.begin(), factors.end(), 1.0) == 1);

    const FFNetDesk m(small_config());
    const TrainingSample s = samples(1, 12)[0];
    const auto base = m.forward(s);
    for (auto kind : {SweepKind::Width2D, SweepKind::Height3D}) {
      const auto rows = kind == SweepKind::Width2D ? sweep_2d_width(m, s, factors) : sweep_3d_height(m, s, factors);
      REQUIRE(rows.size() == 20);
      const auto one = std::find_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.factor == 1.0; });
      CHECK(one->theta_pred.value() == base.theta_pred->radians());
      REQUIRE(one->analytic_theta.has_value());
      CHECK(circular_distance(*one->analytic_theta, s.theta.radians()) < 1e-6);
    }
    std::ostringstream csv;
    write_sweep_csv(csv, sweep_2d_width(m, s, {1.0}), 4);
    CHECK(csv.str().rfind("factor,theta_pred_deg,bin0_deg,bin1_deg,bin2_deg,bin3_deg,analytic_theta_deg\n", 0) == 0);
    CHECK(sweep_kind_from_string("3d_height") == SweepKind::Height3D);
    CHECK_THROWS_AS(sweep_kind_from_string("depth"), ValidationError);
  }
}
