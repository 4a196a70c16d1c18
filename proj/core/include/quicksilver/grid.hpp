#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace quicksilver {

/// Regular 2D or 3D grid. Voxel (i0, .., i{d-1}) sits at physical position
/// (i0 * spacing0, ..). Storage is row-major with the last axis fastest.
struct GridGeometry {
  int dim = 2;
  std::array<int, 3> sizes{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  /// Validates dim in {2,3}, sizes >= 4 and spacing > 0.
  static GridGeometry make(std::span<const int> sizes, std::span<const double> spacing);
  static GridGeometry make(std::span<const int> sizes);
  /// n^dim grid with isotropic spacing.
  static GridGeometry cube(int dim, int n, double spacing = 1.0);

  std::size_t voxel_count() const;
  double voxel_volume() const;
  /// Linear-index stride of one step along `axis`.
  std::size_t stride(int axis) const;
  /// Decomposes a linear voxel index into per-axis indices.
  std::array<int, 3> unravel(std::size_t index) const;
  std::string describe() const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

void require_same_geometry(const GridGeometry& a, const GridGeometry& b, const char* where);

/// One value per voxel (images, intensities, labels, det J).
class ScalarImage {
 public:
  ScalarImage() = default;
  explicit ScalarImage(const GridGeometry& geom);
  ScalarImage(const GridGeometry& geom, std::vector<double> values);

  const GridGeometry& geometry() const { return geom_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::size_t size() const { return values_.size(); }

 private:
  GridGeometry geom_;
  std::vector<double> values_;
};

/// `dim` components per voxel, channels-last. Holds momenta and velocities.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(const GridGeometry& geom);
  VectorField(const GridGeometry& geom, std::vector<double> values);

  const GridGeometry& geometry() const { return geom_; }
  int channels() const { return geom_.dim; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double at(std::size_t voxel, int c) const { return values_[voxel * geom_.dim + c]; }
  double& at(std::size_t voxel, int c) { return values_[voxel * geom_.dim + c]; }

  VectorField& operator+=(const VectorField& other);
  VectorField& operator-=(const VectorField& other);
  VectorField& operator*=(double s);

 private:
  GridGeometry geom_;
  std::vector<double> values_;
};

VectorField operator+(VectorField a, const VectorField& b);
VectorField operator-(VectorField a, const VectorField& b);
VectorField operator*(double s, VectorField a);

/// Physical coordinates of a mapping (Phi or Phi^-1), channels-last.
class DeformationMap {
 public:
  DeformationMap() = default;
  DeformationMap(const GridGeometry& geom, std::vector<double> coords);

  const GridGeometry& geometry() const { return geom_; }
  std::span<const double> coords() const { return coords_; }
  std::span<double> coords() { return coords_; }
  double at(std::size_t voxel, int c) const { return coords_[voxel * geom_.dim + c]; }
  double& at(std::size_t voxel, int c) { return coords_[voxel * geom_.dim + c]; }

  /// coords - identity, as a vector field.
  VectorField displacement() const;
  static DeformationMap from_displacement(const VectorField& u);

 private:
  GridGeometry geom_;
  std::vector<double> coords_;
};

DeformationMap identity_map(const GridGeometry& geom);

/// Multi-linear interpolation of `img` at the mapped positions; positions
/// outside the domain are clamped to the boundary.
ScalarImage interpolate_scalar(const ScalarImage& img, const DeformationMap& positions);

/// Same as interpolate_scalar, each component of `field` interpolated.
VectorField interpolate_vector(const VectorField& field, const DeformationMap& positions);

/// img o phi_inv.
ScalarImage warp_image(const ScalarImage& img, const DeformationMap& phi_inv);

/// Nearest-neighbour warp for label maps.
ScalarImage warp_labels(const ScalarImage& labels, const DeformationMap& phi_inv);

/// phi1 o phi2 (coordinates of phi1 sampled at phi2's positions).
DeformationMap compose(const DeformationMap& phi1, const DeformationMap& phi2);

/// Central differences inside, first-order one-sided at the boundary.
VectorField spatial_gradient(const ScalarImage& img);

/// det(D map) per voxel, same stencil rule as spatial_gradient.
ScalarImage jacobian_determinant(const DeformationMap& map);

/// min det J over interior voxels (one voxel away from the boundary).
double min_interior_jacobian(const DeformationMap& map);

/// Rank-based equalisation into [0,1]. Constant input yields all zeros.
ScalarImage histogram_equalize(const ScalarImage& img, int bins);

/// Sum of squared differences times voxel volume.
double ssd(const ScalarImage& a, const ScalarImage& b);

}  // namespace quicksilver
