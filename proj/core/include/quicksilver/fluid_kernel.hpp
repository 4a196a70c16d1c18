#pragma once

#include <array>
#include <memory>

#include "quicksilver/detail/stencil.hpp"
#include "quicksilver/grid.hpp"

namespace quicksilver {

/// The operator L = -a lap - b grad(div) + c and its inverse K, applied in
/// Fourier space under periodic boundary conditions.
///
/// The symbols come from the finite-difference stencils rather than the
/// continuum operator: the Laplacian and the diagonal of grad(div) use the
/// 3-point second difference, the off-diagonal grad(div) entries use products
/// of periodic central differences. Each frequency therefore carries a real
/// symmetric d x d matrix, positive definite for c > 0.
///
/// Immutable after construction; copies share the FFT plans and tables.
class FluidKernel {
 public:
  struct Params {
    double a = 0.01;
    double b = 0.01;
    double c = 0.001;
  };

  FluidKernel(const GridGeometry& geom, Params params);

  const GridGeometry& geometry() const { return geom_; }
  const Params& params() const { return params_; }

  VectorField apply_L(const VectorField& v) const;
  VectorField apply_K(const VectorField& m) const;

  /// sum_x m1(x) . (K m2)(x) * voxel volume.
  double pairing(const VectorField& m1, const VectorField& m2) const;

  void apply_L(const detail::Planar& in, detail::Planar& out) const;
  void apply_K(const detail::Planar& in, detail::Planar& out) const;
  double pairing(const detail::Planar& m1, const detail::Planar& m2) const;

  /// Number of stored (half-spectrum) frequencies.
  std::size_t frequency_count() const;
  /// Row-major d x d symbol of L (or K) at stored frequency `k`.
  std::array<double, 9> l_symbol(std::size_t k) const;
  std::array<double, 9> k_symbol(std::size_t k) const;

 private:
  struct Impl;
  GridGeometry geom_;
  Params params_;
  std::shared_ptr<const Impl> impl_;

  void apply(const detail::Planar& in, detail::Planar& out, bool inverse) const;
};

/// Throws InvalidArgument("operator not invertible") when c <= 0.
FluidKernel make_kernel(const GridGeometry& geom, double a, double b, double c);

}  // namespace quicksilver
