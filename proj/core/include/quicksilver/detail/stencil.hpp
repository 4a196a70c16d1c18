#pragma once

// Low-level kernels shared by grid, shooting and optimizer code. Fields are
// handled as planar component arrays (one std::vector per axis) so that the
// FFT, finite differences and their transposes operate on contiguous data.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "quicksilver/grid.hpp"

namespace quicksilver::detail {

using Component = std::vector<double>;

/// d planar components; unused trailing entries stay empty.
struct Planar {
  int dim = 0;
  std::array<Component, 3> c;

  Planar() = default;
  Planar(int d, std::size_t n) : dim(d) {
    for (int a = 0; a < d; ++a) c[a].assign(n, 0.0);
  }
  std::size_t size() const { return dim > 0 ? c[0].size() : 0; }
  Component& operator[](int a) { return c[a]; }
  const Component& operator[](int a) const { return c[a]; }
  void fill(double v) {
    for (int a = 0; a < dim; ++a) std::fill(c[a].begin(), c[a].end(), v);
  }
};

Planar to_planar(std::span<const double> interleaved, int dim);
void from_planar(const Planar& p, std::span<double> interleaved);

/// out += s * in, component-wise.
void axpy(double s, const Planar& in, Planar& out);
bool all_finite(const Planar& p);

/// Physical position of every voxel.
Planar grid_positions(const GridGeometry& geom);

/// Boundary rule used by grid_core: central inside, one-sided at the ends.
void diff_clamped(std::span<const double> f, std::span<double> out, const GridGeometry& geom,
                  int axis);

/// Periodic central difference along `axis`. Its transpose is its negative.
void diff_periodic(std::span<const double> f, std::span<double> out, const GridGeometry& geom,
                   int axis);
/// out += scale * D_axis f (periodic).
void diff_periodic_add(std::span<const double> f, std::span<double> out, const GridGeometry& geom,
                       int axis, double scale);

/// Corner indices and weights of a multi-linear interpolation, plus the
/// derivative of each weight with respect to the physical sample position.
struct InterpStencil {
  int corners = 0;
  std::array<std::size_t, 8> index;
  std::array<double, 8> weight;
  std::array<std::array<double, 8>, 3> dweight;

  double sample(const double* f) const {
    double v = 0.0;
    for (int k = 0; k < corners; ++k) v += weight[k] * f[index[k]];
    return v;
  }
  /// Gradient of the interpolant with respect to position, axis `a`.
  double slope(const double* f, int a) const {
    double v = 0.0;
    for (int k = 0; k < corners; ++k) v += dweight[a][k] * f[index[k]];
    return v;
  }
  /// Adjoint of sample(): scatters g into fbar.
  void scatter(double g, double* fbar) const {
    for (int k = 0; k < corners; ++k) fbar[index[k]] += weight[k] * g;
  }
};

/// Clamp-to-edge stencil at physical position `pos` (dim entries). Slope
/// weights are only filled when `with_slope` is set.
InterpStencil make_stencil(const GridGeometry& geom, const double* pos, bool with_slope = false);

/// Samples every component of `field` at `positions` (both planar).
Planar sample_planar(const GridGeometry& geom, const Planar& field, const Planar& positions);

}  // namespace quicksilver::detail
