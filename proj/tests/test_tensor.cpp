#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tlerc/gradcheck.hpp"
#include "tlerc/kernels.hpp"
#include "tlerc/tape.hpp"

using namespace tlerc;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 3.0) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(v));
}

double value_of(Var v, std::size_t i = 0) { return v.value().data()[i]; }

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("tensor construction checks") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor::vector({INFINITY}), NumericError);
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 2);
  CHECK(m.at(1, 0) == 3.0);
  CHECK_THROWS_AS(m.item(), ContractError);
}

TEST_CASE("elementwise examples") {
  Tape tape;
  Var zero = tape.constant(Tensor::scalar(0.0));
  CHECK(ops::sigmoid(zero).item() == 0.5);
  CHECK(ops::tanh(zero).item() == 0.0);
  CHECK(ops::softplus(zero).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(ops::elementwise(ops::Elementwise::mul_scalar, tape.constant(Tensor::scalar(2.0)), 3.0)
            .item() == 6.0);
}

TEST_CASE("exp overflow names the primitive") {
  Tape tape;
  Var big = tape.constant(Tensor::scalar(1000.0));
  try {
    ops::exp(big);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("exp") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::log(tape.constant(Tensor::scalar(0.0))), NumericError);
}

TEST_CASE("linear examples") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1, 2}));
  auto y1 = ops::linear(x, tape.constant(Tensor::identity(2)), tape.constant(Tensor::zeros({2})));
  CHECK(y1.value() == Tensor::vector({1, 2}));
  auto y2 = ops::linear(x, tape.constant(Tensor::zeros({2, 2})),
                        tape.constant(Tensor::vector({3, 4})));
  CHECK(y2.value() == Tensor::vector({3, 4}));
  Var x3 = tape.constant(Tensor::vector({1, -1}));
  auto y3 = ops::linear(x3, tape.constant(Tensor::matrix({{2, 1}, {0, 3}})),
                        tape.constant(Tensor::vector({1, 1})));
  CHECK(y3.value() == Tensor::vector({2, -2}));
  CHECK_THROWS_AS(ops::linear(tape.constant(Tensor::vector({1, 2, 3})),
                              tape.constant(Tensor::identity(2)),
                              tape.constant(Tensor::zeros({2}))),
                  ShapeError);
}

TEST_CASE("softmax examples") {
  Tape tape;
  auto s = ops::softmax(tape.constant(Tensor::vector({0, 0, 0})));
  for (double v : s.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto t = ops::softmax(tape.constant(Tensor::vector({1, 2, 3})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(value_of(t, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(value_of(t, 1) == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(value_of(t, 2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(value_of(t, 0) == doctest::Approx(0.09003).epsilon(1e-4));

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({7}, rng);
    std::vector<double> shifted(x.data().begin(), x.data().end());
    for (auto& v : shifted) v += 12.5;
    const auto a = softmax_values(x.data());
    const auto b = softmax_values(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sum += a[i];
      CHECK(std::abs(a[i] - b[i]) < 1e-15);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("cross entropy examples") {
  Tape tape;
  for (std::size_t k : {2u, 3u, 7u}) {
    auto ce = ops::cross_entropy(tape.constant(Tensor::zeros({k})), k - 1);
    CHECK(std::abs(ce.item() - std::log(static_cast<double>(k))) < 1e-12);
  }
  auto sat = ops::cross_entropy(tape.constant(Tensor::vector({-30, 30, -30})), 1);
  CHECK(sat.item() < 1e-9);
  CHECK(sat.item() >= 0.0);
  auto ce = ops::cross_entropy(tape.constant(Tensor::vector({1, 2})), 0);
  CHECK(ce.item() == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(2.0)))));
  CHECK(ce.item() == doctest::Approx(1.31326).epsilon(1e-5));
  CHECK_THROWS_AS(ops::cross_entropy(tape.constant(Tensor::vector({1, 2})), 2), IndexError);
}

TEST_CASE("mse examples") {
  Tape tape;
  auto c = [&](std::vector<double> a) { return tape.constant(Tensor::vector(std::move(a))); };
  CHECK(ops::mse(c({1, 2}), c({1, 2})).item() == 0.0);
  CHECK(ops::mse(c({1, 1}), c({0, 0})).item() == 1.0);
  CHECK(ops::mse(c({1, 3}), c({0, 1})).item() == 2.5);
  CHECK_THROWS_AS(ops::mse(c({1, 3}), c({0})), ShapeError);
}

TEST_CASE("backward examples") {
  ParameterSet ps;
  ps.add("x", Tensor::scalar(3.0));
  {
    Tape tape;
    Var x = tape.param(ps, "x");
    auto g = tape.backward(x * x);
    CHECK(g.at("x").item() == 6.0);
  }
  ps.set("x", Tensor::scalar(0.0));
  {
    Tape tape;
    auto g = tape.backward(ops::sigmoid(tape.param(ps, "x")));
    CHECK(g.at("x").item() == 0.25);
  }
}

TEST_CASE("backward contract") {
  ParameterSet ps;
  ps.add("v", Tensor::vector({1, 2}));
  ps.add("unused", Tensor::vector({5}));
  Tape tape;
  Var v = tape.param(ps, "v");
  tape.param(ps, "unused");
  CHECK_THROWS_AS(tape.backward(v), ContractError);

  Tape tape2;
  Var v2 = tape2.param(ps, "v");
  tape2.param(ps, "unused");
  auto g = tape2.backward(ops::sum(v2 * v2));
  CHECK(g.at("unused") == Tensor::zeros({1}));
  CHECK(g.at("v") == Tensor::vector({2, 4}));
  CHECK_THROWS_AS(tape2.backward(ops::sum(v2)), ContractError);
}

TEST_CASE("gradients accumulate over repeated parameter use") {
  ParameterSet ps;
  ps.add("w", Tensor::scalar(2.0));
  Tape tape;
  Var a = tape.param(ps, "w");
  Var b = tape.param(ps, "w");
  CHECK(a.id() == b.id());
  // loss = w*w*w -> 3 w^2 = 12
  auto g = tape.backward(a * b * a);
  CHECK(g.at("w").item() == 12.0);
}

TEST_CASE("frozen parameters get no gradient path") {
  ParameterSet ps;
  ps.add("a", Tensor::scalar(2.0));
  ps.add("b", Tensor::scalar(3.0));
  FreezeMask frozen{"b"};
  Tape tape;
  tape.set_frozen(&frozen);
  Var a = tape.param(ps, "a");
  Var b = tape.param(ps, "b");
  CHECK_FALSE(b.requires_grad());
  auto g = tape.backward(a * b);
  CHECK(g.at("a").item() == 3.0);
  CHECK_FALSE(g.contains("b"));
}

TEST_CASE("finite difference check examples") {
  ParameterSet ps;
  ps.add("theta", Tensor::vector({1, 2}));
  auto quad = [](Tape& t, const ParameterSet& p) {
    Var th = t.param(p, "theta");
    return ops::sum(th * th);
  };
  auto r = finite_difference_check(quad, ps);
  CHECK(r.pass);
  CHECK(r.coordinates == 2);

  auto constant = [](Tape& t, const ParameterSet& p) {
    t.param(p, "theta");
    return t.constant(Tensor::scalar(4.0));
  };
  CHECK(finite_difference_check(constant, ps).pass);
  CHECK_THROWS_AS(finite_difference_check(quad, ps, 1e-2), ContractError);
  CHECK_THROWS_AS(finite_difference_check(quad, ps, 1e-9), ContractError);

  // A wrong analytic gradient must be caught.
  auto wrong = [](Tape& t, const ParameterSet& p) {
    Var th = t.param(p, "theta");
    Var detached = t.constant(th.value());
    return ops::sum(th * detached);  // true gradient is 2 theta, analytic sees theta
  };
  auto bad = finite_difference_check(wrong, ps);
  CHECK_FALSE(bad.pass);
  CHECK(bad.worst_name == "theta");
}

TEST_CASE("every primitive matches central differences over 10 seeds") {
  using E = ops::Elementwise;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    ParameterSet ps;
    ps.add("x", random_tensor({4}, rng));
    ps.add("y", random_tensor({4}, rng));
    ps.add("W", random_tensor({3, 4}, rng, 1.0));  // keeps logits off saturation
    ps.add("b", random_tensor({3}, rng));
    ps.add("pos", Tensor::vector({0.5, 1.5, 2.5, 3.0}));
    ps.add("den", Tensor::vector({1.5, -2.0, 2.5, 1.2}));
    ps.add("table", random_tensor({5, 4}, rng));
    const std::size_t gold = rng.index(3);

    // Each primitive is checked through a weighted sum so every output
    // coordinate receives a distinct upstream gradient.
    const Tensor weights = random_tensor({4}, rng, 1.0);
    const Tensor weights3 = random_tensor({3}, rng, 1.0);
    auto reduce = [&](Tape& t, Var v) {
      const Tensor& w = v.size() == 3 ? weights3 : weights;
      if (v.size() == 1) return v;
      if (v.size() == 8) return ops::sum(v * t.constant(Tensor::vector([&] {
                                           std::vector<double> ww(8);
                                           for (std::size_t i = 0; i < 8; ++i) ww[i] = 0.3 + 0.1 * i;
                                           return ww;
                                         }())));
      return ops::sum(v * t.constant(w));
    };
    std::vector<std::pair<std::string, LossFn>> cases = {
        {"sigmoid", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::sigmoid(t.param(p, "x"))); }},
        {"tanh", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::tanh(t.param(p, "x"))); }},
        {"softplus", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::softplus(t.param(p, "x"))); }},
        {"exp", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::exp(t.param(p, "x"))); }},
        {"log", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::log(t.param(p, "pos"))); }},
        {"neg", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::neg(t.param(p, "x"))); }},
        {"mul_scalar", [&](Tape& t, const ParameterSet& p) {
           return reduce(t, ops::elementwise(E::mul_scalar, t.param(p, "x"), -1.7));
         }},
        {"add_scalar", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::add_scalar(t.param(p, "x"), 0.3)); }},
        {"add", [&](Tape& t, const ParameterSet& p) { return reduce(t, t.param(p, "x") + t.param(p, "y")); }},
        {"sub", [&](Tape& t, const ParameterSet& p) { return reduce(t, t.param(p, "x") - t.param(p, "y")); }},
        {"mul", [&](Tape& t, const ParameterSet& p) { return reduce(t, t.param(p, "x") * t.param(p, "y")); }},
        {"div", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::div(t.param(p, "x"), t.param(p, "den"))); }},
        {"linear", [&](Tape& t, const ParameterSet& p) {
           return reduce(t, ops::linear(t.param(p, "x"), t.param(p, "W"), t.param(p, "b")));
         }},
        {"matvec", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::matvec(t.param(p, "W"), t.param(p, "x"))); }},
        {"concat", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::concat(t.param(p, "x"), t.param(p, "y"))); }},
        {"slice", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::slice(ops::concat(t.param(p, "x"), t.param(p, "y")), 2, 4)); }},
        {"row", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::row(t.param(p, "table"), 3)); }},
        {"sum_scalars", [&](Tape& t, const ParameterSet& p) {
           std::vector<Var> terms{ops::sum(t.param(p, "x")), ops::sum(t.param(p, "y") * t.param(p, "y"))};
           return ops::sum_scalars(terms);
         }},
        {"softmax", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::softmax(t.param(p, "x"))); }},
        {"log_softmax", [&](Tape& t, const ParameterSet& p) { return reduce(t, ops::log_softmax(t.param(p, "x"))); }},
        {"cross_entropy", [&](Tape& t, const ParameterSet& p) {
           return ops::cross_entropy(ops::linear(t.param(p, "x"), t.param(p, "W"), t.param(p, "b")), gold);
         }},
        {"mse", [&](Tape& t, const ParameterSet& p) { return ops::mse(t.param(p, "x"), t.param(p, "y")); }},
    };
    for (const auto& [name, fn] : cases) {
      CAPTURE(name);
      CAPTURE(seed);
      const auto report = finite_difference_check(fn, ps, 1e-5, 1e-4);
      CHECK_MESSAGE(report.pass, name << " worst " << report.worst_name << "[" << report.worst_index
                                      << "] rel " << report.max_rel_error);
    }
  }
}

TEST_CASE("random three-layer linear+tanh composition passes the gradient check") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(100 + seed);
    ParameterSet ps;
    ps.add("x", random_tensor({5}, rng));
    for (int l = 0; l < 3; ++l) {
      ps.add("W" + std::to_string(l), random_tensor({5, 5}, rng, 1.0));
      ps.add("b" + std::to_string(l), random_tensor({5}, rng, 1.0));
    }
    auto f = [](Tape& t, const ParameterSet& p) {
      Var h = t.param(p, "x");
      for (int l = 0; l < 3; ++l)
        h = ops::tanh(ops::linear(h, t.param(p, "W" + std::to_string(l)),
                                  t.param(p, "b" + std::to_string(l))));
      return ops::sum(h * h);
    };
    const auto r = finite_difference_check(f, ps);
    CHECK_MESSAGE(r.pass, "seed " << seed << " rel " << r.max_rel_error);
  }
}

TEST_CASE("argmax prefers the lowest index on ties") {
  const std::vector<double> v{1, 1, 0};
  CHECK(argmax(v) == 0);
  const std::vector<double> w{0, 2, 2};
  CHECK(argmax(w) == 1);
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
  Rng rng(9);
  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{3, 5}, {64, 33}, {300, 257}}) {
    const Tensor W = random_tensor({rows, cols}, rng);
    const Tensor x = random_tensor({cols}, rng);
    const Tensor b = random_tensor({rows}, rng);
    const Tensor g = random_tensor({rows}, rng);
    std::vector<double> y1(rows), y2(rows);
    kernels::matvec_serial(W.data(), rows, cols, x.data(), b.data(), y1);
    kernels::matvec_parallel(W.data(), rows, cols, x.data(), b.data(), y2);
    CHECK(y1 == y2);
    std::vector<double> t1(cols, 0.5), t2(cols, 0.5);
    kernels::matvec_transposed_acc_serial(W.data(), rows, cols, g.data(), t1);
    kernels::matvec_transposed_acc_parallel(W.data(), rows, cols, g.data(), t2);
    CHECK(t1 == t2);
    std::vector<double> o1(rows * cols, 0.25), o2(rows * cols, 0.25);
    kernels::outer_acc_serial(g.data(), x.data(), o1);
    kernels::outer_acc_parallel(g.data(), x.data(), o2);
    CHECK(o1 == o2);
  }
}

}  // TEST_SUITE
