#include "quicksilver/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "quicksilver/detail/geodesic.hpp"
#include "quicksilver/error.hpp"

namespace quicksilver {

double RegistrationProblem::match_weight() const { return std::isinf(sigma) ? 0.0 : 1.0 / (sigma * sigma); }

void RegistrationProblem::validate() const {
  require_same_geometry(moving.geometry(), target.geometry(), "registration images");
  require_same_geometry(moving.geometry(), kernel.geometry(), "registration kernel");
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be > 0");
}

namespace {

struct Evaluation {
  EnergyTerms terms;
  detail::ForwardResult fwd;
  std::vector<double> residual;  // warped - target
};

Evaluation evaluate(const detail::Planar& m0, const RegistrationProblem& prob, bool keep_tape) {
  const GridGeometry& g = prob.moving.geometry();
  detail::IntegrateOptions opts;
  opts.keep_tape = keep_tape;
  Evaluation ev;
  ev.fwd = detail::integrate(g, m0, prob.kernel, prob.shooting, opts);
  ev.terms.reg = prob.kernel.pairing(m0, m0);

  const std::size_t n = g.voxel_count();
  const detail::Planar x = detail::grid_positions(g);
  ev.residual.resize(n);
  double s = 0.0;
  double p[3];
  const double* img = prob.moving.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < g.dim; ++a) p[a] = x.c[a][i] + ev.fwd.u.c[a][i];
    const double r = detail::make_stencil(g, p).sample(img) - prob.target[i];
    ev.residual[i] = r;
    s += r * r;
  }
  ev.terms.match = prob.match_weight() * s * g.voxel_volume();
  ev.terms.total = ev.terms.reg + ev.terms.match;
  return ev;
}

detail::Planar gradient_of(const detail::Planar& m0, const RegistrationProblem& prob, const Evaluation& ev) {
  const GridGeometry& g = prob.moving.geometry();
  const std::size_t n = g.voxel_count();
  const detail::Planar x = detail::grid_positions(g);
  detail::Planar u_bar(g.dim, n);
  const double w = 2.0 * prob.match_weight() * g.voxel_volume();
  const double* img = prob.moving.values().data();
  double p[3];
  if (w != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      for (int a = 0; a < g.dim; ++a) p[a] = x.c[a][i] + ev.fwd.u.c[a][i];
      const detail::InterpStencil s = detail::make_stencil(g, p, true);
      for (int a = 0; a < g.dim; ++a) u_bar.c[a][i] = w * ev.residual[i] * s.slope(img, a);
    }
  }
  detail::Planar grad = detail::adjoint(g, ev.fwd, prob.kernel, prob.shooting, u_bar);
  detail::Planar km;
  prob.kernel.apply_K(m0, km);
  detail::axpy(2.0 * g.voxel_volume(), km, grad);
  return grad;
}

VectorField to_field(const GridGeometry& g, const detail::Planar& p) {
  VectorField f(g);
  detail::from_planar(p, f.values());
  return f;
}

double max_abs(const detail::Planar& p) {
  double m = 0.0;
  for (int a = 0; a < p.dim; ++a)
    for (double v : p.c[a]) m = std::max(m, std::abs(v));
  return m;
}

double dot(const detail::Planar& a, const detail::Planar& b) {
  double s = 0.0;
  for (int c = 0; c < a.dim; ++c)
    for (std::size_t i = 0; i < a.c[c].size(); ++i) s += a.c[c][i] * b.c[c][i];
  return s;
}

// A trial whose map folds is rejected like a diverged one: the discrete flow
// has left the diffeomorphic regime even when the energy went down.
bool folds(const GridGeometry& g, const Evaluation& ev) {
  return !(min_interior_jacobian(DeformationMap::from_displacement(to_field(g, ev.fwd.u))) > 0.0);
}

}  // namespace

EnergyTerms energy(const VectorField& m0, const RegistrationProblem& prob) {
  prob.validate();
  require_same_geometry(m0.geometry(), prob.moving.geometry(), "energy");
  return evaluate(detail::to_planar(m0.values(), m0.channels()), prob, false).terms;
}

EnergyTerms energy_and_gradient(const VectorField& m0, const RegistrationProblem& prob, VectorField& grad) {
  prob.validate();
  require_same_geometry(m0.geometry(), prob.moving.geometry(), "energy_gradient");
  const detail::Planar m = detail::to_planar(m0.values(), m0.channels());
  const Evaluation ev = evaluate(m, prob, true);
  grad = to_field(m0.geometry(), gradient_of(m, prob, ev));
  return ev.terms;
}

VectorField energy_gradient(const VectorField& m0, const RegistrationProblem& prob) {
  VectorField g;
  energy_and_gradient(m0, prob, g);
  return g;
}

OptimizeResult optimize(const RegistrationProblem& prob, const OptimizeConfig& cfg, const VectorField* init) {
  prob.validate();
  if (cfg.max_iters < 0 || !(cfg.grad_tol >= 0.0) || !(cfg.ls_shrink > 0.0 && cfg.ls_shrink < 1.0) ||
      !(cfg.ls_c1 > 0.0 && cfg.ls_c1 < 1.0) || !(cfg.step0 > 0.0))
    throw InvalidArgument("invalid optimizer configuration");
  const GridGeometry& g = prob.moving.geometry();
  detail::Planar m = init ? detail::to_planar(init->values(), g.dim) : detail::Planar(g.dim, g.voxel_count());

  OptimizeResult res;
  Evaluation ev = evaluate(m, prob, true);
  res.energy_trace.push_back({0, ev.terms.total, ev.terms.reg, ev.terms.match});

  // Step scale grows after clean accepts and tracks the accepted scale after
  // backtracking, so later iterations start near the last useful step.
  double scale = cfg.step0;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const detail::Planar grad = gradient_of(m, prob, ev);
    const double gmax = max_abs(grad);
    if (gmax < cfg.grad_tol) {
      res.converged = true;
      break;
    }
    const double gg = dot(grad, grad);
    bool accepted = false;
    int shrinks = 0;
    for (; shrinks <= cfg.max_shrinks; ++shrinks) {
      const double alpha = scale / gmax;
      detail::Planar trial = m;
      detail::axpy(-alpha, grad, trial);
      try {
        Evaluation cand = evaluate(trial, prob, true);
        if (cand.terms.total <= ev.terms.total - cfg.ls_c1 * alpha * gg && !folds(g, cand)) {
          m = std::move(trial);
          ev = std::move(cand);
          accepted = true;
          break;
        }
      } catch (const ShootingDiverged&) {
        // Treat as a failed trial and shrink.
      }
      scale *= cfg.ls_shrink;
    }
    if (!accepted) break;
    if (shrinks == 0) scale *= 2.0;
    res.energy_trace.push_back({iter + 1, ev.terms.total, ev.terms.reg, ev.terms.match});
  }
  res.iters_used = iter;
  res.m0 = to_field(g, m);
  return res;
}

}  // namespace quicksilver
