#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ffnet/error.hpp"
#include "ffnet/nn_core.hpp"

using namespace ffnet;
using namespace ffnet::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Sum of squares of a tiny network: relu(A x) -> linear B, with an optional truncation.
struct TwoLayer {
  ParamSet params;
  Matrix x = random_matrix(3, 5, 11);
  Matrix target = random_matrix(2, 5, 12);

  TwoLayer() {
    params.add("a", {3, 4, Activation::Relu}, 1);
    params.add("b", {4, 2, Activation::Linear}, 2);
  }

  double loss() const {
    Tape t(params);
    const auto y = t.dense(1, t.dense(0, t.input(x)));
    return (t.value(y) - target).squaredNorm();
  }

  void grads(Gradients& g, bool truncate) const {
    Tape t(params);
    auto h = t.dense(0, t.input(x));
    if (truncate) h = t.stop_gradient(h);
    const auto y = t.dense(1, h);
    t.backward({{y, 2.0 * (t.value(y) - target)}}, g);
  }
};

}  // namespace

TEST_SUITE("nn_core") {
  TEST_CASE("dense forward basics") {
    DenseLayer id{"id", {3, 3, Activation::Linear}, {Matrix::Identity(3, 3), Vector::Zero(3)}};
    const Vector x = Vector::LinSpaced(3, -1, 1);
    CHECK(dense_forward(id, x) == x);

    DenseLayer z{"z", {2, 3, Activation::Relu}, {Matrix::Zero(3, 2), Vector(3)}};
    z.params.bias << -1.0, 0.0, 2.5;
    const Vector y = dense_forward(z, Vector::Ones(2));
    CHECK(y(0) == 0.0);
    CHECK(y(1) == 0.0);
    CHECK(y(2) == 2.5);

    CHECK_THROWS_AS(dense_forward(id, Vector::Ones(2)), ValidationError);
  }

  TEST_CASE("dense forward matches a triple-loop oracle") {
    DenseLayer l{"r", {7, 5, Activation::Linear}, init_params({7, 5, Activation::Linear}, 3)};
    l.params.bias = Vector::LinSpaced(5, -0.3, 0.4);
    const Vector x = random_matrix(7, 1, 4).col(0);
    const Vector y = dense_forward(l, x);
    for (int i = 0; i < 5; ++i) {
      double acc = l.params.bias(i);
      for (int j = 0; j < 7; ++j) acc += l.params.weights(i, j) * x(j);
      CHECK(std::abs(y(i) - acc) < 1e-12);
    }
  }

  TEST_CASE("initialisation") {
    const LayerSpec relu{100, 100, Activation::Relu};
    CHECK(init_params(relu, 9).weights == init_params(relu, 9).weights);
    CHECK(init_params(relu, 9).weights != init_params(relu, 10).weights);
    CHECK(init_params(relu, 9).bias.isZero());
    const double he = 2.0 / 100;
    const double xavier = 2.0 / 200;
    const Matrix w = init_params(relu, 1).weights;
    const double var = w.array().square().mean() - std::pow(w.mean(), 2);
    CHECK(std::abs(var - he) < 0.2 * he);
    const Matrix v = init_params({100, 100, Activation::Linear}, 1).weights;
    const double var2 = v.array().square().mean() - std::pow(v.mean(), 2);
    CHECK(std::abs(var2 - xavier) < 0.2 * xavier);
  }

  TEST_CASE("single linear layer gradient is the input pattern") {
    ParamSet p;
    p.add("l", {3, 2, Activation::Linear}, 1);
    Matrix x(3, 1);
    x << 1.5, -2.0, 0.25;
    Tape t(p);
    const auto y = t.dense(0, t.input(x));
    Gradients g = Gradients::zeros_like(p);
    t.backward({{y, Matrix::Ones(2, 1)}}, g);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 3; ++j) CHECK(g.layers[0].weights(i, j) == x(j, 0));
      CHECK(g.layers[0].bias(i) == 1.0);
    }
  }

  TEST_CASE("backward matches finite differences") {
    TwoLayer net;
    Gradients g = Gradients::zeros_like(net.params);
    net.grads(g, false);
    const auto report = finite_diff_check(net.params, [&] { return net.loss(); }, g, 1e-5);
    CHECK(report.max_rel_error < 1e-4);
    REQUIRE(report.per_layer.size() == 2);
    CHECK(report.per_layer[0].checked == 16);
  }

  TEST_CASE("input gradients and concat") {
    ParamSet p;
    p.add("a", {2, 3, Activation::Linear}, 1);
    p.add("b", {4, 1, Activation::Linear}, 2);
    const Matrix x = random_matrix(2, 3, 5);
    const Matrix c = random_matrix(1, 3, 6);
    auto f = [&](const Matrix& xi) {
      Tape t(p);
      const auto in = t.input(xi, true);
      const auto y = t.dense(1, t.concat({t.dense(0, in), t.input(c)}));
      return std::pair{t.value(y).sum(), 0};
    };
    Tape t(p);
    const auto in = t.input(x, true);
    const auto cat = t.concat({t.dense(0, in), t.input(c)});
    CHECK(t.value(cat).rows() == 4);
    const auto y = t.dense(1, cat);
    Gradients g = Gradients::zeros_like(p);
    const auto d = t.backward({{y, Matrix::Ones(1, 3)}}, g);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 3; ++j) {
        Matrix xp = x;
        Matrix xm = x;
        xp(i, j) += 1e-6;
        xm(i, j) -= 1e-6;
        const double num = (f(xp).first - f(xm).first) / 2e-6;
        CHECK(relative_error(d[in](i, j), num) < 1e-6);
      }
    }
  }

  TEST_CASE("stop gradient blocks upstream parameters exactly") {
    TwoLayer net;
    Gradients g = Gradients::zeros_like(net.params);
    net.grads(g, true);
    CHECK(g.abs_sum(0) == 0.0);
    Gradients full = Gradients::zeros_like(net.params);
    net.grads(full, false);
    CHECK(g.layers[1].weights == full.layers[1].weights);
    CHECK(g.layers[1].bias == full.layers[1].bias);
  }

  TEST_CASE("backward contract") {
    ParamSet p;
    p.add("l", {2, 2, Activation::Linear}, 1);
    Gradients g = Gradients::zeros_like(p);
    Tape empty(p);
    CHECK_THROWS_AS(empty.backward({}, g), ValidationError);
    Tape t(p);
    const auto y = t.dense(0, t.input(Matrix::Ones(2, 1)));
    CHECK_THROWS_AS(t.backward({{y, Matrix::Ones(3, 1)}}, g), ValidationError);
  }

  TEST_CASE("sgd with momentum") {
    ParamSet p;
    p.add("l", {1, 1, Activation::Linear}, 1);
    p.layer(0).params.weights(0, 0) = 1.0;
    p.layer(0).params.bias(0) = 0.0;
    Gradients g = Gradients::zeros_like(p);

    SgdMomentum zero(p, 0.9);
    zero.step(p, g, 0.1);
    CHECK(p.layer(0).params.weights(0, 0) == 1.0);

    ParamSet q = p;
    SgdMomentum plain(q, 0.0);
    g.layers[0].weights(0, 0) = 0.25;
    plain.step(q, g, 1.0);
    CHECK(q.layer(0).params.weights(0, 0) == 0.75);

    // v1 = g1, p1 = p0 - lr g1; v2 = mu g1 + g2, p2 = p1 - lr v2
    ParamSet r = p;
    SgdMomentum mom(r, 0.9);
    g.layers[0].weights(0, 0) = 0.5;
    mom.step(r, g, 0.1);
    CHECK(r.layer(0).params.weights(0, 0) == doctest::Approx(1.0 - 0.05));
    g.layers[0].weights(0, 0) = -0.2;
    mom.step(r, g, 0.1);
    CHECK(r.layer(0).params.weights(0, 0) == doctest::Approx(0.95 - 0.1 * (0.9 * 0.5 - 0.2)));

    g.layers[0].bias(0) = NAN;
    const ParamSet before = r;
    CHECK_THROWS_AS(mom.step(r, g, 0.1), NonFiniteError);
    CHECK(r == before);
  }

  TEST_CASE("relative error floor") {
    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(relative_error(1e-9, 0.0) == doctest::Approx(1e-3));
    CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  }

  TEST_CASE("checkpoint roundtrip is bit exact") {
    TwoLayer net;
    net.params.layer(0).params.bias(1) = 0.1 + 0.2;
    net.params.layer(1).params.weights(0, 0) = std::nextafter(1.0, 2.0);
    std::stringstream ss;
    save_params(ss, net.params);
    const ParamSet back = load_params(ss);
    CHECK(back == net.params);
    CHECK(back.layer(0).spec.activation == Activation::Relu);
    CHECK(back.layer(1).name == "b");
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    TwoLayer net;
    std::stringstream ss;
    save_params(ss, net.params);
    const std::string text = ss.str();
    std::istringstream truncated(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_params(truncated), ValidationError);
    std::istringstream wrong("ffnet-params 9\n");
    CHECK_THROWS_AS(load_params(wrong), ValidationError);
  }

  TEST_CASE("shortest decimal formatting") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
      CHECK(parse_double(format_double(v), "v") == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK_THROWS_AS(parse_double("1.5x", "field"), ValidationError);
    CHECK_THROWS_AS(parse_double("", "field"), ValidationError);
  }

  TEST_CASE("param set lookup") {
    TwoLayer net;
    CHECK(net.params.find("b") == 1);
    CHECK_THROWS(net.params.find("zzz"));
    CHECK(net.params.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
  }
}
