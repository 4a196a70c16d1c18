#pragma once

// Helpers shared by the unit tests.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "quicksilver/grid.hpp"

namespace testutil {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("quicksilver_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline quicksilver::ScalarImage random_image(const quicksilver::GridGeometry& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> v(g.voxel_count());
  for (double& x : v) x = U(rng);
  return quicksilver::ScalarImage(g, std::move(v));
}

inline quicksilver::VectorField random_field(const quicksilver::GridGeometry& g, std::mt19937_64& rng,
                                             double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  std::vector<double> v(g.voxel_count() * g.dim);
  for (double& x : v) x = N(rng);
  return quicksilver::VectorField(g, std::move(v));
}

/// Random smooth periodic field: a few low Fourier modes per component.
inline quicksilver::VectorField smooth_periodic_field(const quicksilver::GridGeometry& g, std::mt19937_64& rng,
                                                      double scale = 1.0, int max_mode = 2) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> v(g.voxel_count() * g.dim, 0.0);
  for (int c = 0; c < g.dim; ++c)
    for (int term = 0; term < 4; ++term) {
      std::array<int, 3> k{};
      for (int a = 0; a < g.dim; ++a) k[a] = std::uniform_int_distribution<int>(-max_mode, max_mode)(rng);
      const double amp = scale * N(rng), ph = phase(rng);
      for (std::size_t i = 0; i < g.voxel_count(); ++i) {
        const auto idx = g.unravel(i);
        double arg = ph;
        for (int a = 0; a < g.dim; ++a) arg += 2.0 * std::numbers::pi * k[a] * idx[a] / g.sizes[a];
        v[i * g.dim + c] += amp * std::sin(arg);
      }
    }
  return quicksilver::VectorField(g, std::move(v));
}

/// Sum of periodic Gaussian bumps on a square domain of side `length`, with
/// analytic values and first derivatives (2D).
struct BumpField {
  struct Bump {
    int comp;
    double cx, cy, sigma, amp;
  };
  double length = 16.0;
  std::vector<Bump> bumps;

  static BumpField random(std::mt19937_64& rng, double length, double sigma, int per_component = 3) {
    std::uniform_real_distribution<double> pos(0.0, length), amp(-1.0, 1.0);
    BumpField f;
    f.length = length;
    for (int c = 0; c < 2; ++c)
      for (int t = 0; t < per_component; ++t) f.bumps.push_back({c, pos(rng), pos(rng), sigma, amp(rng)});
    return f;
  }

  // value[c] and grad[c][axis] at physical (x, y)
  void eval(double x, double y, double value[2], double grad[2][2]) const {
    for (int c = 0; c < 2; ++c) value[c] = grad[c][0] = grad[c][1] = 0.0;
    for (const auto& b : bumps)
      for (int ix = -2; ix <= 2; ++ix)
        for (int iy = -2; iy <= 2; ++iy) {
          const double dx = x - b.cx + ix * length, dy = y - b.cy + iy * length;
          const double s2 = b.sigma * b.sigma;
          const double g = b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
          value[b.comp] += g;
          grad[b.comp][0] -= dx / s2 * g;
          grad[b.comp][1] -= dy / s2 * g;
        }
  }

  quicksilver::VectorField sample(const quicksilver::GridGeometry& g) const {
    quicksilver::VectorField out(g);
    double val[2], grad[2][2];
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      const auto idx = g.unravel(i);
      eval(idx[0] * g.spacing[0], idx[1] * g.spacing[1], val, grad);
      out.at(i, 0) = val[0];
      out.at(i, 1) = val[1];
    }
    return out;
  }
};

/// ad_v w = Dv w - Dw v evaluated from the analytic derivatives.
inline quicksilver::VectorField analytic_ad(const quicksilver::GridGeometry& g, const BumpField& v,
                                            const BumpField& w) {
  quicksilver::VectorField out(g);
  double vv[2], dv[2][2], wv[2], dw[2][2];
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const auto idx = g.unravel(i);
    const double x = idx[0] * g.spacing[0], y = idx[1] * g.spacing[1];
    v.eval(x, y, vv, dv);
    w.eval(x, y, wv, dw);
    for (int c = 0; c < 2; ++c)
      out.at(i, c) = dv[c][0] * wv[0] + dv[c][1] * wv[1] - dw[c][0] * vv[0] - dw[c][1] * vv[1];
  }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace testutil
