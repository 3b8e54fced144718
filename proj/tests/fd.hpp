#pragma once

// Central finite-difference gradient checks against the tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gtsp/nn/params.hpp"
#include "gtsp/nn/tape.hpp"
#include "gtsp/rng.hpp"

namespace gtsp::testing {

struct FdInput {
  int rows;
  int cols;
  std::vector<double> values;
};

using LossFn = std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&)>;

// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12), over all inputs.
inline double fd_relative_error(const std::vector<FdInput>& inputs, const LossFn& fn, double step = 1e-5) {
  nn::Tape tape(true);
  std::vector<nn::Var> vars;
  for (const auto& in : inputs) vars.push_back(tape.leaf(in.rows, in.cols, in.values));
  const nn::Var loss = fn(tape, vars);
  tape.backward(loss);

  auto eval = [&](const std::vector<FdInput>& ins) {
    nn::Tape t(false);
    std::vector<nn::Var> vs;
    for (const auto& in : ins) vs.push_back(t.constant(in.rows, in.cols, in.values));
    return fn(t, vs).item();
  };

  double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
  auto work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto analytic = tape.grad(vars[i]);
    for (std::size_t e = 0; e < inputs[i].values.size(); ++e) {
      const double orig = work[i].values[e];
      work[i].values[e] = orig + step;
      const double up = eval(work);
      work[i].values[e] = orig - step;
      const double down = eval(work);
      work[i].values[e] = orig;
      const double numeric = (up - down) / (2.0 * step);
      diff_sq += (analytic[e] - numeric) * (analytic[e] - numeric);
      a_sq += analytic[e] * analytic[e];
      n_sq += numeric * numeric;
    }
  }
  return std::sqrt(diff_sq) / std::max({std::sqrt(a_sq), std::sqrt(n_sq), 1e-12});
}

inline FdInput random_input(Rng& rng, int rows, int cols, double scale = 1.0) {
  FdInput in{rows, cols, {}};
  for (int i = 0; i < rows * cols; ++i) in.values.push_back(rng.uniform(-scale, scale));
  return in;
}

inline std::vector<double> random_weights(Rng& rng, std::size_t count) {
  std::vector<double> w(count);
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return w;
}

// Moves every parameter off its initial value. Zero-initialised biases put
// ReLU inputs exactly on the kink, where central differences disagree with
// the subgradient.
inline void jitter(nn::ParameterStore& store, std::uint64_t seed, double scale = 0.05) {
  Rng rng(seed);
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (double& v : store[i].value.values) v += scale * rng.uniform(-1.0, 1.0);
  }
}

}  // namespace gtsp::testing
