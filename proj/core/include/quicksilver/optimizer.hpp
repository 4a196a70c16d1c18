#pragma once

#include <vector>

#include "quicksilver/fluid_kernel.hpp"
#include "quicksilver/grid.hpp"
#include "quicksilver/shooting.hpp"

namespace quicksilver {

/// E(m0) = <m0, K m0> + 1/sigma^2 ||M o Phi^-1(1) - T||^2 for one image pair.
/// sigma = +inf switches the image term off.
struct RegistrationProblem {
  ScalarImage moving;
  ScalarImage target;
  FluidKernel kernel;
  double sigma = 0.2;
  ShootingConfig shooting;

  double match_weight() const;
  void validate() const;
};

struct EnergyTerms {
  double total = 0.0;
  double reg = 0.0;
  double match = 0.0;
};

struct OptimizeConfig {
  int max_iters = 200;
  double grad_tol = 1e-6;
  double ls_shrink = 0.5;
  double ls_c1 = 1e-4;
  /// Largest per-voxel momentum change of the first trial step.
  double step0 = 0.05;
  int max_shrinks = 30;
};

struct TraceEntry {
  int iter = 0;
  double total = 0.0;
  double reg = 0.0;
  double match = 0.0;
};

struct OptimizeResult {
  VectorField m0;
  std::vector<TraceEntry> energy_trace;
  bool converged = false;
  int iters_used = 0;
};

EnergyTerms energy(const VectorField& m0, const RegistrationProblem& prob);

/// Exact gradient of the discretised energy (reverse mode through the
/// stored shooting trajectory plus the analytic 2 K m0 regulariser term).
VectorField energy_gradient(const VectorField& m0, const RegistrationProblem& prob);

/// Energy and gradient from a single forward pass.
EnergyTerms energy_and_gradient(const VectorField& m0, const RegistrationProblem& prob, VectorField& grad);

/// Gradient descent with Armijo backtracking, started from zero (or `init`).
OptimizeResult optimize(const RegistrationProblem& prob, const OptimizeConfig& cfg = {},
                        const VectorField* init = nullptr);

}  // namespace quicksilver
