#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "textnn/optim.hpp"

using namespace textnn;

namespace {

using Params = std::map<std::string, Tensor>;

Params single(const std::vector<double>& values) {
  Params p;
  p["p"] = Tensor::leaf({values.size()}, values);
  return p;
}

// Loss 0.5*sum(p^2) would give grad = p; sum_squares gives grad = 2p. Either
// way the gradient is a pure function of the parameter values, so repeated
// runs with identical op ordering are bitwise reproducible.
void set_grads(Params& params) {
  for (auto& [name, p] : params) p.zero_grad();
  backward(sum_squares(params.at("p")));
}

}  // namespace

// --- SGD with momentum -------------------------------------------------------------

TEST_CASE("sgd with zero momentum is plain gradient descent") {
  Params params = single({1.0, -2.0});
  OptimizerState st;
  st.momentum = 0.0;
  st.sgd_lr = 0.1;
  set_grads(params);  // grad = {2, -4}
  const double lr = sgd_momentum_step(params, st);
  REQUIRE(lr == 0.1);
  REQUIRE(params.at("p").value()[0] == Catch::Approx(1.0 - 0.1 * 2.0).margin(1e-15));
  REQUIRE(params.at("p").value()[1] == Catch::Approx(-2.0 + 0.1 * 4.0).margin(1e-15));
  REQUIRE(st.step == 1);
}

TEST_CASE("sgd momentum accumulates: two equal gradients move by (1 + 1+mu) lr g") {
  // Keep the gradient pinned by resetting the parameter between steps.
  OptimizerState st;
  st.sgd_lr = 0.01;
  st.momentum = 0.9;
  Params params = single({1.0});
  set_grads(params);  // g = 2
  sgd_momentum_step(params, st);
  // velocity is now g; restore p and reuse the same gradient
  params.at("p").value_mut() = {1.0};
  set_grads(params);  // g = 2 again
  sgd_momentum_step(params, st);
  // v2 = 0.9*2 + 2 = 3.8; p = 1 - 0.01*3.8
  REQUIRE(params.at("p").value()[0] == Catch::Approx(1.0 - 0.01 * 3.8).margin(1e-15));
}

TEST_CASE("sgd with zero gradient and fresh state leaves parameters untouched") {
  Params params = single({0.0});  // grad of sum_squares at 0 is 0
  OptimizerState st;
  set_grads(params);
  sgd_momentum_step(params, st);
  REQUIRE(params.at("p").value()[0] == 0.0);
}

TEST_CASE("sgd with zero gradient still coasts on stored velocity") {
  Params params = single({0.0});
  OptimizerState st;
  st.sgd_lr = 0.1;
  st.velocity["p"] = {1.0};
  set_grads(params);  // g = 0
  sgd_momentum_step(params, st);
  // v <- 0.9*1 + 0 = 0.9; p <- 0 - 0.1*0.9
  REQUIRE(params.at("p").value()[0] == Catch::Approx(-0.09).margin(1e-15));
}

// --- Adam ----------------------------------------------------------------------------

TEST_CASE("adam's first step is approximately -lr * sign(gradient)") {
  Params params = single({0.25, -0.25});
  OptimizerState st;  // adam_lr = 1e-3
  set_grads(params);  // grad = {0.5, -0.5}
  const double lr = adam_step(params, st);
  REQUIRE(lr == 1e-3);
  REQUIRE(params.at("p").value()[0] == Catch::Approx(0.25 - 1e-3).margin(1e-9));
  REQUIRE(params.at("p").value()[1] == Catch::Approx(-0.25 + 1e-3).margin(1e-9));
}

TEST_CASE("adam with zero gradient makes no update") {
  Params params = single({0.0});
  OptimizerState st;
  set_grads(params);
  adam_step(params, st);
  REQUIRE(params.at("p").value()[0] == 0.0);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
  Params params = single({3.0});
  OptimizerState st;
  st.adam_lr = 0.1;
  for (int i = 0; i < 100; ++i) {
    set_grads(params);
    adam_step(params, st);
  }
  REQUIRE(std::fabs(params.at("p").value()[0]) < 0.5);
  REQUIRE(st.step == 100);
}

// --- learning-rate decay ----------------------------------------------------------------

TEST_CASE("decay coefficient one keeps the learning rate constant") {
  OptimizerState st;
  st.step = 12345;
  st.decay_coeff = 1.0;
  st.decay_interval = 7;
  REQUIRE(decayed_lr(0.01, st) == 0.01);
}

TEST_CASE("staircase decay multiplies once per completed interval") {
  OptimizerState st;
  st.decay_coeff = 0.5;
  st.decay_interval = 10;
  st.step = 25;  // floor(25/10) = 2 rungs
  REQUIRE(decayed_lr(0.1, st) == Catch::Approx(0.025).margin(1e-15));
  st.step = 9;
  REQUIRE(decayed_lr(0.1, st) == 0.1);
}

TEST_CASE("decayed learning rate never increases with the step counter") {
  OptimizerState st;
  st.decay_coeff = 0.95;
  st.decay_interval = 3;
  double prev = decayed_lr(1.0, st);
  for (st.step = 1; st.step <= 30; ++st.step) {
    const double cur = decayed_lr(1.0, st);
    REQUIRE(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("decay validation rejects out-of-range coefficients and zero intervals") {
  OptimizerState st;
  st.decay_coeff = 1.5;
  REQUIRE_THROWS_AS(decayed_lr(0.1, st), ContractError);
  st.decay_coeff = 0.0;
  REQUIRE_THROWS_AS(decayed_lr(0.1, st), ContractError);
  st.decay_coeff = 0.9;
  st.decay_interval = 0;
  REQUIRE_THROWS_AS(decayed_lr(0.1, st), ContractError);
}

TEST_CASE("doubling the sgd learning rate exactly doubles the first update") {
  Params a = single({0.0});
  a.at("p").value_mut() = {0.0};
  Params b = single({0.0});
  // give both the same fixed gradient through a shifted loss
  auto grads_from = [](Params& params, double at) {
    params.at("p").value_mut() = {at};
    for (auto& [name, p] : params) p.zero_grad();
    backward(sum_squares(params.at("p")));
    params.at("p").value_mut() = {0.0};  // step from the origin
  };
  OptimizerState sa;
  sa.sgd_lr = 0.01;
  OptimizerState sb;
  sb.sgd_lr = 0.02;
  grads_from(a, 0.3);
  grads_from(b, 0.3);
  sgd_momentum_step(a, sa);
  sgd_momentum_step(b, sb);
  REQUIRE(b.at("p").value()[0] == 2.0 * a.at("p").value()[0]);
}

// --- SWATS --------------------------------------------------------------------------------

TEST_CASE("swats with switch step zero is sgd from the first call") {
  Params sw = single({1.0, -1.5});
  Params plain = single({1.0, -1.5});
  OptimizerState st_sw;
  st_sw.switch_step = 0;
  OptimizerState st_plain;
  st_plain.phase = Phase::Sgd;
  for (int i = 0; i < 5; ++i) {
    set_grads(sw);
    swats_step(sw, st_sw);
    set_grads(plain);
    sgd_momentum_step(plain, st_plain);
  }
  REQUIRE(sw.at("p").value() == plain.at("p").value());
  REQUIRE(st_sw.phase == Phase::Sgd);
}

TEST_CASE("swats with an unreachable switch step is adam throughout") {
  Params sw = single({1.0, -1.5});
  Params plain = single({1.0, -1.5});
  OptimizerState st_sw;  // switch_step defaults to the maximum
  OptimizerState st_plain;
  for (int i = 0; i < 5; ++i) {
    set_grads(sw);
    swats_step(sw, st_sw);
    set_grads(plain);
    adam_step(plain, st_plain);
  }
  REQUIRE(sw.at("p").value() == plain.at("p").value());
  REQUIRE(st_sw.phase == Phase::Adam);
}

TEST_CASE("swats follows the adam oracle for steps 1-3 and the sgd oracle afterwards") {
  const std::vector<double> start{2.0, -1.0, 0.5};
  Params sw = single(start);
  OptimizerState st_sw;
  st_sw.switch_step = 3;
  st_sw.decay_coeff = 0.9;  // decay rides the global step in both phases
  st_sw.decay_interval = 2;

  Params oracle = single(start);
  OptimizerState st_adam;
  st_adam.decay_coeff = 0.9;
  st_adam.decay_interval = 2;

  std::vector<double> swats_lrs;
  for (int i = 0; i < 3; ++i) {
    set_grads(sw);
    swats_lrs.push_back(swats_step(sw, st_sw));
    set_grads(oracle);
    adam_step(oracle, st_adam);
  }
  REQUIRE(st_sw.phase == Phase::Adam);
  REQUIRE(sw.at("p").value() == oracle.at("p").value());

  // Second leg: an SGD state born at global step 3 with zero velocity.
  OptimizerState st_sgd;
  st_sgd.phase = Phase::Sgd;
  st_sgd.step = 3;
  st_sgd.decay_coeff = 0.9;
  st_sgd.decay_interval = 2;
  for (int i = 0; i < 3; ++i) {
    set_grads(sw);
    swats_lrs.push_back(swats_step(sw, st_sw));
    set_grads(oracle);
    sgd_momentum_step(oracle, st_sgd);
  }
  REQUIRE(st_sw.phase == Phase::Sgd);
  REQUIRE(sw.at("p").value() == oracle.at("p").value());
  REQUIRE(st_sw.step == 6);

  // Applied learning rates decay on the shared global step counter.
  for (std::uint64_t s = 0; s < 6; ++s) {
    OptimizerState probe;
    probe.step = s;
    probe.decay_coeff = 0.9;
    probe.decay_interval = 2;
    const double base = s < 3 ? probe.adam_lr : probe.sgd_lr;
    REQUIRE(swats_lrs[s] == decayed_lr(base, probe));
  }
}

TEST_CASE("optimizers reject parameters that never received a gradient") {
  Params params = single({1.0});
  OptimizerState st;
  try {
    adam_step(params, st);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    REQUIRE(std::string(e.what()).find("'p'") != std::string::npos);
  }
}
