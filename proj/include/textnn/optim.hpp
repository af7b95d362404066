#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "textnn/tensor.hpp"

namespace textnn {

enum class Phase { Adam, Sgd };

inline const char* phase_name(Phase p) { return p == Phase::Adam ? "adam" : "sgd"; }

// Step counter, per-parameter accumulator slots and every hyperparameter of
// the three update rules. Slots are allocated lazily on first use and mirror
// their parameter's element count.
struct OptimizerState {
  Phase phase = Phase::Adam;
  std::uint64_t step = 0;
  std::uint64_t switch_step = std::numeric_limits<std::uint64_t>::max();  // adam while step < S

  double adam_lr = 1e-3;
  double sgd_lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;
  double decay_coeff = 1.0;          // d in lr(t) = lr0 * d^floor(t / T)
  std::uint64_t decay_interval = 1;  // T

  std::map<std::string, std::vector<double>> m;         // Adam first moments
  std::map<std::string, std::vector<double>> v;         // Adam second moments
  std::map<std::string, std::vector<double>> velocity;  // SGD momentum buffers
};

// Staircase exponential decay on the global step counter, applied identically
// in both phases.
inline double decayed_lr(double lr0, const OptimizerState& state) {
  if (!(state.decay_coeff > 0.0) || state.decay_coeff > 1.0)
    throw ContractError("decayed_lr: decay coefficient must lie in (0, 1], got " +
                        std::to_string(state.decay_coeff));
  if (state.decay_interval == 0) throw ContractError("decayed_lr: decay interval must be >= 1");
  const auto rungs = static_cast<double>(state.step / state.decay_interval);
  return lr0 * std::pow(state.decay_coeff, rungs);
}

namespace detail {

inline const std::vector<double>& require_grad(const std::pair<const std::string, Tensor>& entry) {
  if (!entry.second.has_grad())
    throw ContractError("optimizer: parameter '" + entry.first + "' has no gradient");
  return entry.second.grad();
}

inline std::vector<double>& slot(std::map<std::string, std::vector<double>>& slots,
                                 const std::string& name, std::size_t n) {
  auto it = slots.find(name);
  if (it == slots.end()) it = slots.emplace(name, std::vector<double>(n, 0.0)).first;
  return it->second;
}

}  // namespace detail

// velocity <- mu * velocity + grad; param <- param - lr(t) * velocity.
// Returns the learning rate that was applied.
inline double sgd_momentum_step(std::map<std::string, Tensor>& params, OptimizerState& state) {
  const double lr = decayed_lr(state.sgd_lr, state);
  for (auto& entry : params) {
    const std::vector<double>& g = detail::require_grad(entry);
    std::vector<double>& vel = detail::slot(state.velocity, entry.first, g.size());
    std::vector<double>& p = entry.second.value_mut();
    for (std::size_t i = 0; i < g.size(); ++i) {
      vel[i] = state.momentum * vel[i] + g[i];
      p[i] -= lr * vel[i];
    }
  }
  ++state.step;
  return lr;
}

// Bias-corrected Adam. Returns the learning rate that was applied.
inline double adam_step(std::map<std::string, Tensor>& params, OptimizerState& state) {
  const double lr = decayed_lr(state.adam_lr, state);
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& entry : params) {
    const std::vector<double>& g = detail::require_grad(entry);
    std::vector<double>& m = detail::slot(state.m, entry.first, g.size());
    std::vector<double>& v = detail::slot(state.v, entry.first, g.size());
    std::vector<double>& p = entry.second.value_mut();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
  ++state.step;
  return lr;
}

// Adam until the configured switch step, SGD with momentum afterwards. The
// phase flips exactly once; momentum buffers start from zero at the switch.
inline double swats_step(std::map<std::string, Tensor>& params, OptimizerState& state) {
  if (state.phase == Phase::Adam && state.step >= state.switch_step) state.phase = Phase::Sgd;
  return state.phase == Phase::Adam ? adam_step(params, state) : sgd_momentum_step(params, state);
}

}  // namespace textnn
