// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

#include "turbowave/model.hpp"

namespace turbowave {

// Linear (OT) conditional path from noise x0 at t = 0 to data x1 at t = 1:
//   x_t = (1 - (1 - sigma_min) t) x0 + t x1,   u = x1 - (1 - sigma_min) x0.
struct ProbabilityPath {
  double sigma_min = 1e-4;

  void validate() const;
};

struct Interpolant {
  torch::Tensor x_t;
  torch::Tensor target;
};

// t is a scalar or one value per batch row ([B] against [B, T] samples).
Interpolant sample_interpolant(const ProbabilityPath& path, const torch::Tensor& x0,
                               const torch::Tensor& x1, const torch::Tensor& t);
Interpolant sample_interpolant(const ProbabilityPath& path, const torch::Tensor& x0,
                               const torch::Tensor& x1, double t);

enum class Solver { kEuler, kMidpoint };

Solver parse_solver(const std::string& name);
std::string solver_name(Solver s);

// Integration knots in [0, 1) with an implicit terminal 1.0.
struct TimeGrid {
  std::vector<double> knots;
  Solver solver = Solver::kEuler;

  void validate() const;
  int steps() const { return static_cast<int>(knots.size()); }
  // Estimator evaluations per generated sample.
  int nfe() const { return solver == Solver::kEuler ? steps() : 2 * steps(); }

  static TimeGrid uniform(int steps, Solver solver);
};

// Anything that maps (x [B, T], condition, t [B]) to a field shaped like x.
using VectorField = std::function<torch::Tensor(
    const torch::Tensor& x, const torch::Tensor& condition, const torch::Tensor& t)>;

VectorField as_field(VectorFieldEstimator est);

// Conditional flow matching regression for one batch. Draws t ~ U[0, 1)
// per row, then x0 ~ N(0, 1), both from `gen` in that order.
torch::Tensor cfm_loss(const VectorField& field, const ProbabilityPath& path,
                       const torch::Tensor& x1, const torch::Tensor& condition,
                       torch::Generator& gen);

// Explicit fixed-grid integration from t = 0 to 1. Keeps the autograd graph
// of every step.
torch::Tensor ode_sample(const VectorField& field, const torch::Tensor& x0,
                         const torch::Tensor& condition, const TimeGrid& grid);

// Euler over [0, 0.5] (2 steps) or [0, 0.25, 0.5, 0.75] (4 steps).
TimeGrid fixed_step_grid(int n_steps);

torch::Tensor fixed_step_generate(const VectorField& field, const torch::Tensor& x0,
                                  const torch::Tensor& condition, int n_steps);

}  // namespace turbowave
