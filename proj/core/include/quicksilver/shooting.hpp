#pragma once

#include <cstdint>
#include <vector>

#include "quicksilver/fluid_kernel.hpp"
#include "quicksilver/grid.hpp"

namespace quicksilver {

enum class Integrator { Rk4, Euler };

struct ShootingConfig {
  int n_steps = 10;
  Integrator integrator = Integrator::Rk4;
};

/// Geodesic state at time t: momentum, Phi^-1 (moving -> target) and Phi.
struct GeodesicState {
  VectorField m;
  DeformationMap phi_inv;
  DeformationMap phi;
  double t = 0.0;
};

/// Coadjoint action (Dv)^T m + (Dm) v + m div(v) with periodic central
/// differences. The last two terms are evaluated as div(m v^T), which makes
/// <ad_star(v, m), w> = <m, ad(v, w)> hold exactly on the grid.
VectorField ad_star(const VectorField& v, const VectorField& m);

/// ad_v w = Dv w - Dw v, same stencils as ad_star.
VectorField ad(const VectorField& v, const VectorField& w);

/// Integrates dm/dt = -ad*_{Km} m together with both maps from t=0 to t=1.
/// Throws ShootingDiverged when non-finite values appear.
GeodesicState shoot(const VectorField& m0, const FluidKernel& kernel, const ShootingConfig& cfg = {});

/// All n_steps + 1 states, t = 0 .. 1.
std::vector<GeodesicState> shoot_trajectory(const VectorField& m0, const FluidKernel& kernel,
                                            const ShootingConfig& cfg = {});

/// Process-wide count of completed shoot()/shoot_trajectory() calls.
std::uint64_t shoot_invocations();

}  // namespace quicksilver
