// Copyright 2026 The TurboWave Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "turbowave/flow.hpp"

#include "turbowave/errors.hpp"

namespace turbowave {

namespace {

torch::Tensor broadcast_time(const torch::Tensor& t, const torch::Tensor& like) {
  if (t.dim() == 0) return t;
  // [B] -> [B, 1, ...] against [B, T, ...]
  auto sizes = std::vector<int64_t>(like.dim(), 1);
  sizes[0] = t.size(0);
  return t.reshape(sizes);
}

torch::Tensor time_column(double t, const torch::Tensor& x) {
  return torch::full({x.size(0)}, t, x.options());
}

}  // namespace

void ProbabilityPath::validate() const {
  if (!(sigma_min > 0.0 && sigma_min < 1.0)) {
    throw ConfigError("sigma_min must lie in (0, 1)");
  }
}

Interpolant sample_interpolant(const ProbabilityPath& path, const torch::Tensor& x0,
                               const torch::Tensor& x1, const torch::Tensor& t) {
  path.validate();
  if (x0.sizes() != x1.sizes()) {
    throw ShapeError("noise and data shapes differ");
  }
  auto tb = broadcast_time(t.to(x0.scalar_type()), x0);
  // (1 - t) + sigma_min * t keeps both endpoints exact in floating point.
  auto noise_weight = (1.0 - tb) + path.sigma_min * tb;
  auto x_t = noise_weight * x0 + tb * x1;
  auto target = x1 - (1.0 - path.sigma_min) * x0;
  return {x_t, target};
}

Interpolant sample_interpolant(const ProbabilityPath& path, const torch::Tensor& x0,
                               const torch::Tensor& x1, double t) {
  if (t < 0.0 || t > 1.0) throw ConfigError("t must lie in [0, 1]");
  return sample_interpolant(path, x0, x1, torch::scalar_tensor(t, x0.options()));
}

Solver parse_solver(const std::string& name) {
  if (name == "euler") return Solver::kEuler;
  if (name == "midpoint") return Solver::kMidpoint;
  throw ConfigError("unknown solver '" + name + "' (expected euler|midpoint)");
}

std::string solver_name(Solver s) {
  return s == Solver::kEuler ? "euler" : "midpoint";
}

void TimeGrid::validate() const {
  if (knots.empty()) throw ConfigError("time grid has no knots");
  if (knots.front() != 0.0) throw ConfigError("time grid must start at 0");
  for (size_t i = 0; i < knots.size(); ++i) {
    if (knots[i] >= 1.0) throw ConfigError("time grid knots must be < 1");
    if (i > 0 && knots[i] <= knots[i - 1]) {
      throw ConfigError("time grid knots must be strictly increasing");
    }
  }
}

TimeGrid TimeGrid::uniform(int steps, Solver solver) {
  if (steps < 1) throw ConfigError("step count must be >= 1");
  TimeGrid grid;
  grid.solver = solver;
  for (int i = 0; i < steps; ++i) grid.knots.push_back(static_cast<double>(i) / steps);
  return grid;
}

VectorField as_field(VectorFieldEstimator est) {
  return [est](const torch::Tensor& x, const torch::Tensor& c,
               const torch::Tensor& t) mutable { return est->forward(x, c, t); };
}

torch::Tensor cfm_loss(const VectorField& field, const ProbabilityPath& path,
                       const torch::Tensor& x1, const torch::Tensor& condition,
                       torch::Generator& gen) {
  if (x1.dim() != 2 || x1.size(0) == 0) {
    throw ShapeError("cfm_loss expects a non-empty [B, T] batch");
  }
  auto t = torch::rand({x1.size(0)}, gen, x1.options());
  auto x0 = torch::randn(x1.sizes(), gen, x1.options());
  auto interp = sample_interpolant(path, x0, x1, t);
  auto pred = field(interp.x_t, condition, t);
  return (pred - interp.target).pow(2).mean();
}

torch::Tensor ode_sample(const VectorField& field, const torch::Tensor& x0,
                         const torch::Tensor& condition, const TimeGrid& grid) {
  grid.validate();
  auto x = x0;
  for (size_t i = 0; i < grid.knots.size(); ++i) {
    const double t = grid.knots[i];
    const double next = i + 1 < grid.knots.size() ? grid.knots[i + 1] : 1.0;
    const double dt = next - t;
    auto v = field(x, condition, time_column(t, x));
    if (grid.solver == Solver::kEuler) {
      x = x + dt * v;
    } else {
      auto mid = x + (0.5 * dt) * v;
      x = x + dt * field(mid, condition, time_column(t + 0.5 * dt, x));
    }
  }
  return x;
}

TimeGrid fixed_step_grid(int n_steps) {
  if (n_steps != 2 && n_steps != 4) {
    throw ConfigError("fixed-step generation supports 2 or 4 steps, got " +
                      std::to_string(n_steps));
  }
  return TimeGrid::uniform(n_steps, Solver::kEuler);
}

torch::Tensor fixed_step_generate(const VectorField& field, const torch::Tensor& x0,
                                  const torch::Tensor& condition, int n_steps) {
  return ode_sample(field, x0, condition, fixed_step_grid(n_steps));
}

}  // namespace turbowave
