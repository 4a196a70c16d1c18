#pragma once

// Discrete geodesic integrator shared by shoot() and the optimizer's adjoint.
//
// One step of size dt advances
//   momentum    m_{n+1} = m_n + dt sum_s b_s k_s,  k_s = -ad*(K m_s, m_s),
//               m_0 = m_n, m_s = m_n + dt a_s k_{s-1}
//   Phi^-1      u_{n+1}(x) = foot(x) - x + u_n(foot(x))       (u = Phi^-1 - id)
//               foot = x - dt sum_s b_s q_s, traced backwards through the
//               stage velocities in reverse order
//   Phi         Phi_{n+1} = Phi_n + dt sum_s b_s v_s(Phi_n + dt a_s ...)
// Every operation is differentiable so the optimizer can run reverse mode
// through exactly this discretisation.

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "quicksilver/detail/stencil.hpp"
#include "quicksilver/fluid_kernel.hpp"
#include "quicksilver/shooting.hpp"

namespace quicksilver::detail {

struct Tableau {
  int stages = 4;
  std::array<double, 4> a{};  // stage s starts from m_n + dt a_s k_{s-1}
  std::array<double, 4> b{};
};

Tableau tableau_for(Integrator integrator);

/// Everything the reverse pass needs from one step.
struct StepTape {
  Planar m;                       // m_n
  Planar u;                       // Phi^-1 - id at the start of the step
  std::array<Planar, 4> stage_m;  // m_s
  std::array<Planar, 4> stage_v;  // K m_s
};

struct ForwardResult {
  Planar m;                    // final momentum
  Planar u;                    // final Phi^-1 - id
  std::optional<Planar> phi;   // final Phi (physical coordinates) if tracked
  std::vector<StepTape> tape;  // one entry per step if requested
};

struct IntegrateOptions {
  bool keep_tape = false;
  bool track_phi = false;
  /// Called at t=0 and after every step with (step index, m, u, phi or null).
  std::function<void(int, const Planar&, const Planar&, const Planar*)> observer;
};

ForwardResult integrate(const GridGeometry& geom, const Planar& m0, const FluidKernel& kernel,
                        const ShootingConfig& cfg, const IntegrateOptions& opts);

/// Given dE/du at t=1 (and optionally dE/dm at t=1), returns dE/dm0 by
/// reverse-mode differentiation through `fwd.tape`.
Planar adjoint(const GridGeometry& geom, const ForwardResult& fwd, const FluidKernel& kernel,
               const ShootingConfig& cfg, const Planar& u_bar, const Planar* m_bar = nullptr);

void ad_star(const GridGeometry& geom, const Planar& v, const Planar& m, Planar& out);
void ad(const GridGeometry& geom, const Planar& v, const Planar& w, Planar& out);

/// Transposes of the two partial derivatives of ad_star at (v, m), applied
/// to the cotangent `abar` and accumulated into vbar / mbar.
void ad_star_adjoint(const GridGeometry& geom, const Planar& v, const Planar& m, const Planar& abar, Planar& vbar,
                     Planar& mbar);

}  // namespace quicksilver::detail
