#include "quicksilver/shooting.hpp"

#include <atomic>

#include "quicksilver/detail/geodesic.hpp"
#include "quicksilver/error.hpp"

namespace quicksilver {

namespace detail {

namespace {

std::atomic<std::uint64_t> g_shoot_calls{0};

void multiply_add(const Component& x, const Component& y, Component& out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] += x[i] * y[i];
}

/// Samples every component of `field` at `pos` (planar), writing to `out`.
void sample_into(const GridGeometry& geom, const Planar& field, const Planar& pos, Planar& out) {
  const int d = geom.dim;
  const std::size_t n = pos.size();
  double p[3];
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < d; ++a) p[a] = pos.c[a][i];
    const InterpStencil s = make_stencil(geom, p);
    for (int c = 0; c < field.dim; ++c) out.c[c][i] = s.sample(field.c[c].data());
  }
}

// Backward characteristic trace for one step: sample positions q_s (s >= 1),
// traced velocities and the foot of the characteristic through each voxel.
struct Trace {
  std::array<Planar, 4> pos;
  std::array<Planar, 4> vel;
  Planar foot;
};

Trace trace_back(const GridGeometry& geom, const Planar& x, const StepTape& st, const Tableau& tb, double dt) {
  const int d = geom.dim;
  const std::size_t n = x.size();
  const int S = tb.stages;
  Trace tr;
  tr.vel[0] = st.stage_v[S - 1];
  for (int s = 1; s < S; ++s) {
    tr.pos[s] = x;
    axpy(-dt * tb.a[s], tr.vel[s - 1], tr.pos[s]);
    tr.vel[s] = Planar(d, n);
    sample_into(geom, st.stage_v[S - 1 - s], tr.pos[s], tr.vel[s]);
  }
  tr.foot = x;
  for (int s = 0; s < S; ++s) axpy(-dt * tb.b[s], tr.vel[s], tr.foot);
  return tr;
}

}  // namespace

Tableau tableau_for(Integrator integrator) {
  Tableau t;
  if (integrator == Integrator::Euler) {
    t.stages = 1;
    t.b = {1.0, 0.0, 0.0, 0.0};
  } else {
    t.stages = 4;
    t.a = {0.0, 0.5, 0.5, 1.0};
    t.b = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};
  }
  return t;
}

void ad_star(const GridGeometry& geom, const Planar& v, const Planar& m, Planar& out) {
  // (Dv)^T m + div(m v^T); the second term is (Dm) v + m div v written in flux
  // form so that ad_star is exactly the transpose of ad below.
  const int d = geom.dim;
  const std::size_t n = geom.voxel_count();
  out = Planar(d, n);
  Component tmp(n), prod(n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      diff_periodic(v.c[j], tmp, geom, i);
      multiply_add(tmp, m.c[j], out.c[i]);
      for (std::size_t k = 0; k < n; ++k) prod[k] = m.c[i][k] * v.c[j][k];
      diff_periodic_add(prod, out.c[i], geom, j, 1.0);
    }
}

void ad(const GridGeometry& geom, const Planar& v, const Planar& w, Planar& out) {
  const int d = geom.dim;
  const std::size_t n = geom.voxel_count();
  out = Planar(d, n);
  Component tmp(n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      diff_periodic(v.c[i], tmp, geom, j);
      multiply_add(tmp, w.c[j], out.c[i]);
      diff_periodic(w.c[i], tmp, geom, j);
      for (std::size_t k = 0; k < n; ++k) out.c[i][k] -= tmp[k] * v.c[j][k];
    }
}

void ad_star_adjoint(const GridGeometry& geom, const Planar& v, const Planar& m, const Planar& abar, Planar& vbar,
                     Planar& mbar) {
  const int d = geom.dim;
  const std::size_t n = geom.voxel_count();
  Component tmp(n), prod(n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      // (D_i v_j) m_j
      diff_periodic(v.c[j], tmp, geom, i);
      multiply_add(abar.c[i], tmp, mbar.c[j]);
      for (std::size_t k = 0; k < n; ++k) prod[k] = abar.c[i][k] * m.c[j][k];
      diff_periodic_add(prod, vbar.c[j], geom, i, -1.0);
      // D_j (m_i v_j)
      diff_periodic(abar.c[i], tmp, geom, j);
      for (std::size_t k = 0; k < n; ++k) {
        mbar.c[i][k] -= tmp[k] * v.c[j][k];
        vbar.c[j][k] -= tmp[k] * m.c[i][k];
      }
    }
}

ForwardResult integrate(const GridGeometry& geom, const Planar& m0, const FluidKernel& kernel,
                        const ShootingConfig& cfg, const IntegrateOptions& opts) {
  if (cfg.n_steps < 1) throw InvalidArgument("shooting needs n_steps >= 1");
  if (!all_finite(m0)) throw ShootingDiverged();
  const int d = geom.dim;
  const std::size_t n = geom.voxel_count();
  const Tableau tb = tableau_for(cfg.integrator);
  const int S = tb.stages;
  const double dt = 1.0 / cfg.n_steps;
  const Planar x = grid_positions(geom);

  ForwardResult res;
  res.m = m0;
  res.u = Planar(d, n);
  if (opts.track_phi) res.phi = x;
  if (opts.keep_tape) res.tape.reserve(cfg.n_steps);
  if (opts.observer) opts.observer(0, res.m, res.u, res.phi ? &*res.phi : nullptr);

  std::array<Planar, 4> k;
  for (int step = 0; step < cfg.n_steps; ++step) {
    StepTape st;
    st.m = res.m;
    st.u = res.u;
    for (int s = 0; s < S; ++s) {
      st.stage_m[s] = st.m;
      if (s > 0) axpy(dt * tb.a[s], k[s - 1], st.stage_m[s]);
      kernel.apply_K(st.stage_m[s], st.stage_v[s]);
      ad_star(geom, st.stage_v[s], st.stage_m[s], k[s]);
      for (int a = 0; a < d; ++a)
        for (double& val : k[s].c[a]) val = -val;
    }
    for (int s = 0; s < S; ++s) axpy(dt * tb.b[s], k[s], res.m);

    // Phi^-1 by semi-Lagrangian transport of the displacement.
    const Trace tr = trace_back(geom, x, st, tb, dt);
    Planar sampled(d, n);
    sample_into(geom, st.u, tr.foot, sampled);
    for (int a = 0; a < d; ++a)
      for (std::size_t i = 0; i < n; ++i) res.u.c[a][i] = tr.foot.c[a][i] - x.c[a][i] + sampled.c[a][i];

    if (opts.track_phi) {
      Planar& phi = *res.phi;
      const Planar start = phi;
      Planar vel(d, n), pos;
      for (int s = 0; s < S; ++s) {
        pos = start;
        if (s > 0) axpy(dt * tb.a[s], vel, pos);
        Planar next(d, n);
        sample_into(geom, st.stage_v[s], pos, next);
        vel = std::move(next);
        axpy(dt * tb.b[s], vel, phi);
      }
      if (!all_finite(phi)) throw ShootingDiverged();
    }
    if (!all_finite(res.m) || !all_finite(res.u)) throw ShootingDiverged();
    if (opts.keep_tape) res.tape.push_back(std::move(st));
    if (opts.observer) opts.observer(step + 1, res.m, res.u, res.phi ? &*res.phi : nullptr);
  }
  return res;
}

Planar adjoint(const GridGeometry& geom, const ForwardResult& fwd, const FluidKernel& kernel,
               const ShootingConfig& cfg, const Planar& u_bar_final, const Planar* m_bar_final) {
  const int d = geom.dim;
  const std::size_t n = geom.voxel_count();
  const Tableau tb = tableau_for(cfg.integrator);
  const int S = tb.stages;
  const double dt = 1.0 / cfg.n_steps;
  const Planar x = grid_positions(geom);
  if (static_cast<int>(fwd.tape.size()) != cfg.n_steps) throw InvalidArgument("adjoint needs a full forward tape");

  Planar u_bar = u_bar_final;
  Planar m_bar = m_bar_final ? *m_bar_final : Planar(d, n);

  for (int step = cfg.n_steps - 1; step >= 0; --step) {
    const StepTape& st = fwd.tape[step];
    std::array<Planar, 4> v_bar;
    for (int s = 0; s < S; ++s) v_bar[s] = Planar(d, n);

    // Reverse of u_{n+1} = foot - x + u_n(foot).
    const Trace tr = trace_back(geom, x, st, tb, dt);
    Planar u_bar_prev(d, n);
    Planar foot_bar(d, n);
    double p[3];
    for (std::size_t i = 0; i < n; ++i) {
      for (int a = 0; a < d; ++a) p[a] = tr.foot.c[a][i];
      const InterpStencil sten = make_stencil(geom, p, true);
      for (int c = 0; c < d; ++c) {
        const double g = u_bar.c[c][i];
        sten.scatter(g, u_bar_prev.c[c].data());
        for (int a = 0; a < d; ++a) foot_bar.c[a][i] += g * sten.slope(st.u.c[c].data(), a);
      }
      for (int a = 0; a < d; ++a) foot_bar.c[a][i] += u_bar.c[a][i];
    }
    std::array<Planar, 4> q_bar;  // cotangents of traced velocities
    for (int s = 0; s < S; ++s) {
      q_bar[s] = Planar(d, n);
      axpy(-dt * tb.b[s], foot_bar, q_bar[s]);
    }
    for (int s = S - 1; s >= 1; --s) {
      const Planar& field = st.stage_v[S - 1 - s];
      Planar& fbar = v_bar[S - 1 - s];
      Planar pos_bar(d, n);
      for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < d; ++a) p[a] = tr.pos[s].c[a][i];
        const InterpStencil sten = make_stencil(geom, p, true);
        for (int c = 0; c < d; ++c) {
          const double g = q_bar[s].c[c][i];
          sten.scatter(g, fbar.c[c].data());
          for (int a = 0; a < d; ++a) pos_bar.c[a][i] += g * sten.slope(field.c[c].data(), a);
        }
      }
      axpy(-dt * tb.a[s], pos_bar, q_bar[s - 1]);
    }
    axpy(1.0, q_bar[0], v_bar[S - 1]);
    u_bar = std::move(u_bar_prev);

    // Reverse of the momentum stages.
    Planar m_bar_n = m_bar;
    std::array<Planar, 4> k_bar;
    for (int s = 0; s < S; ++s) {
      k_bar[s] = Planar(d, n);
      axpy(dt * tb.b[s], m_bar, k_bar[s]);
    }
    for (int s = S - 1; s >= 0; --s) {
      Planar a_bar(d, n);
      axpy(-1.0, k_bar[s], a_bar);
      Planar ms_bar(d, n);
      ad_star_adjoint(geom, st.stage_v[s], st.stage_m[s], a_bar, v_bar[s], ms_bar);
      Planar kv;
      kernel.apply_K(v_bar[s], kv);
      axpy(1.0, kv, ms_bar);
      axpy(1.0, ms_bar, m_bar_n);
      if (s > 0) axpy(dt * tb.a[s], ms_bar, k_bar[s - 1]);
    }
    m_bar = std::move(m_bar_n);
  }
  return m_bar;
}

}  // namespace detail

namespace {

VectorField to_field(const GridGeometry& g, const detail::Planar& p) {
  VectorField f(g);
  detail::from_planar(p, f.values());
  return f;
}

DeformationMap map_from(const GridGeometry& g, const detail::Planar& x, const detail::Planar& u) {
  std::vector<double> c(g.voxel_count() * g.dim);
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    for (int a = 0; a < g.dim; ++a) c[i * g.dim + a] = x.c[a][i] + u.c[a][i];
  return DeformationMap(g, std::move(c));
}

DeformationMap map_from(const GridGeometry& g, const detail::Planar& phi) {
  std::vector<double> c(g.voxel_count() * g.dim);
  detail::from_planar(phi, c);
  return DeformationMap(g, std::move(c));
}

}  // namespace

VectorField ad_star(const VectorField& v, const VectorField& m) {
  require_same_geometry(v.geometry(), m.geometry(), "ad_star");
  const GridGeometry& g = v.geometry();
  detail::Planar out;
  detail::ad_star(g, detail::to_planar(v.values(), g.dim), detail::to_planar(m.values(), g.dim), out);
  return to_field(g, out);
}

VectorField ad(const VectorField& v, const VectorField& w) {
  require_same_geometry(v.geometry(), w.geometry(), "ad");
  const GridGeometry& g = v.geometry();
  detail::Planar out;
  detail::ad(g, detail::to_planar(v.values(), g.dim), detail::to_planar(w.values(), g.dim), out);
  return to_field(g, out);
}

std::vector<GeodesicState> shoot_trajectory(const VectorField& m0, const FluidKernel& kernel,
                                            const ShootingConfig& cfg) {
  require_same_geometry(m0.geometry(), kernel.geometry(), "shoot");
  const GridGeometry& g = m0.geometry();
  const detail::Planar x = detail::grid_positions(g);
  std::vector<GeodesicState> states;
  states.reserve(cfg.n_steps + 1);
  detail::IntegrateOptions opts;
  opts.track_phi = true;
  opts.observer = [&](int step, const detail::Planar& m, const detail::Planar& u, const detail::Planar* phi) {
    states.push_back({to_field(g, m), map_from(g, x, u), map_from(g, *phi), static_cast<double>(step) / cfg.n_steps});
  };
  detail::integrate(g, detail::to_planar(m0.values(), g.dim), kernel, cfg, opts);
  states.back().t = 1.0;
  detail::g_shoot_calls.fetch_add(1, std::memory_order_relaxed);
  return states;
}

GeodesicState shoot(const VectorField& m0, const FluidKernel& kernel, const ShootingConfig& cfg) {
  require_same_geometry(m0.geometry(), kernel.geometry(), "shoot");
  const GridGeometry& g = m0.geometry();
  detail::IntegrateOptions opts;
  opts.track_phi = true;
  const detail::ForwardResult r = detail::integrate(g, detail::to_planar(m0.values(), g.dim), kernel, cfg, opts);
  detail::g_shoot_calls.fetch_add(1, std::memory_order_relaxed);
  return {to_field(g, r.m), map_from(g, detail::grid_positions(g), r.u), map_from(g, *r.phi), 1.0};
}

std::uint64_t shoot_invocations() { return detail::g_shoot_calls.load(std::memory_order_relaxed); }

}  // namespace quicksilver
