#include "quicksilver/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "quicksilver/detail/stencil.hpp"
#include "quicksilver/error.hpp"

namespace quicksilver {

GridGeometry GridGeometry::make(std::span<const int> sizes, std::span<const double> spacing) {
  if (sizes.size() != 2 && sizes.size() != 3)
    throw InvalidArgument("grid dimension must be 2 or 3, got " + std::to_string(sizes.size()));
  if (spacing.size() != sizes.size()) throw InvalidArgument("spacing and sizes differ in length");
  GridGeometry g;
  g.dim = static_cast<int>(sizes.size());
  for (int a = 0; a < g.dim; ++a) {
    if (sizes[a] < 4) throw InvalidArgument("grid sizes must be >= 4");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw InvalidArgument("grid spacing must be > 0");
    g.sizes[a] = sizes[a];
    g.spacing[a] = spacing[a];
  }
  return g;
}

GridGeometry GridGeometry::make(std::span<const int> sizes) {
  std::vector<double> ones(sizes.size(), 1.0);
  return make(sizes, ones);
}

GridGeometry GridGeometry::cube(int dim, int n, double spacing) {
  std::vector<int> s(dim, n);
  std::vector<double> h(dim, spacing);
  return make(s, h);
}

std::size_t GridGeometry::voxel_count() const {
  std::size_t n = 1;
  for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(sizes[a]);
  return n;
}

double GridGeometry::voxel_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim; ++a) v *= spacing[a];
  return v;
}

std::size_t GridGeometry::stride(int axis) const {
  std::size_t s = 1;
  for (int a = dim - 1; a > axis; --a) s *= static_cast<std::size_t>(sizes[a]);
  return s;
}

std::array<int, 3> GridGeometry::unravel(std::size_t index) const {
  std::array<int, 3> idx{0, 0, 0};
  for (int a = dim - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(index % sizes[a]);
    index /= sizes[a];
  }
  return idx;
}

std::string GridGeometry::describe() const {
  std::ostringstream os;
  for (int a = 0; a < dim; ++a) os << (a ? "x" : "") << sizes[a];
  os << " @ ";
  for (int a = 0; a < dim; ++a) os << (a ? "x" : "") << spacing[a];
  return os.str();
}

void require_same_geometry(const GridGeometry& a, const GridGeometry& b, const char* where) {
  if (!(a == b)) throw GeometryMismatch(std::string(where) + ": " + a.describe() + " vs " + b.describe());
}

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + " contains non-finite values");
}

}  // namespace

ScalarImage::ScalarImage(const GridGeometry& geom) : geom_(geom), values_(geom.voxel_count(), 0.0) {}

ScalarImage::ScalarImage(const GridGeometry& geom, std::vector<double> values)
    : geom_(geom), values_(std::move(values)) {
  if (values_.size() != geom_.voxel_count()) throw InvalidArgument("image data length does not match grid");
  require_finite(values_, "image");
}

VectorField::VectorField(const GridGeometry& geom)
    : geom_(geom), values_(geom.voxel_count() * geom.dim, 0.0) {}

VectorField::VectorField(const GridGeometry& geom, std::vector<double> values)
    : geom_(geom), values_(std::move(values)) {
  if (values_.size() != geom_.voxel_count() * geom_.dim)
    throw InvalidArgument("vector field data length does not match grid");
  require_finite(values_, "vector field");
}

VectorField& VectorField::operator+=(const VectorField& other) {
  require_same_geometry(geom_, other.geom_, "vector add");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

VectorField& VectorField::operator-=(const VectorField& other) {
  require_same_geometry(geom_, other.geom_, "vector subtract");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

VectorField& VectorField::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
VectorField operator*(double s, VectorField a) { return a *= s; }

DeformationMap::DeformationMap(const GridGeometry& geom, std::vector<double> coords)
    : geom_(geom), coords_(std::move(coords)) {
  if (coords_.size() != geom_.voxel_count() * geom_.dim)
    throw InvalidArgument("deformation map length does not match grid");
  require_finite(coords_, "deformation map");
}

VectorField DeformationMap::displacement() const {
  const DeformationMap id = identity_map(geom_);
  std::vector<double> u(coords_.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = coords_[i] - id.coords_[i];
  return VectorField(geom_, std::move(u));
}

DeformationMap DeformationMap::from_displacement(const VectorField& u) {
  DeformationMap m = identity_map(u.geometry());
  const auto uv = u.values();
  for (std::size_t i = 0; i < uv.size(); ++i) m.coords_[i] += uv[i];
  return m;
}

DeformationMap identity_map(const GridGeometry& geom) {
  const std::size_t n = geom.voxel_count();
  std::vector<double> c(n * geom.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = geom.unravel(i);
    for (int a = 0; a < geom.dim; ++a) c[i * geom.dim + a] = idx[a] * geom.spacing[a];
  }
  return DeformationMap(geom, std::move(c));
}

ScalarImage interpolate_scalar(const ScalarImage& img, const DeformationMap& positions) {
  require_same_geometry(img.geometry(), positions.geometry(), "interpolate_scalar");
  const GridGeometry& g = img.geometry();
  const std::size_t n = g.voxel_count();
  std::vector<double> out(n);
  const double* f = img.values().data();
  const double* p = positions.coords().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::make_stencil(g, p + i * g.dim).sample(f);
  return ScalarImage(g, std::move(out));
}

VectorField interpolate_vector(const VectorField& field, const DeformationMap& positions) {
  require_same_geometry(field.geometry(), positions.geometry(), "interpolate_vector");
  const GridGeometry& g = field.geometry();
  const detail::Planar f = detail::to_planar(field.values(), g.dim);
  const detail::Planar p = detail::to_planar(positions.coords(), g.dim);
  const detail::Planar s = detail::sample_planar(g, f, p);
  VectorField out(g);
  detail::from_planar(s, out.values());
  return out;
}

ScalarImage warp_image(const ScalarImage& img, const DeformationMap& phi_inv) {
  return interpolate_scalar(img, phi_inv);
}

ScalarImage warp_labels(const ScalarImage& labels, const DeformationMap& phi_inv) {
  require_same_geometry(labels.geometry(), phi_inv.geometry(), "warp_labels");
  const GridGeometry& g = labels.geometry();
  const std::size_t n = g.voxel_count();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = 0;
    for (int a = 0; a < g.dim; ++a) {
      const double x = std::round(phi_inv.at(i, a) / g.spacing[a]);
      const int k = static_cast<int>(std::clamp(x, 0.0, static_cast<double>(g.sizes[a] - 1)));
      idx += static_cast<std::size_t>(k) * g.stride(a);
    }
    out[i] = labels[idx];
  }
  return ScalarImage(g, std::move(out));
}

DeformationMap compose(const DeformationMap& phi1, const DeformationMap& phi2) {
  require_same_geometry(phi1.geometry(), phi2.geometry(), "compose");
  const GridGeometry& g = phi1.geometry();
  const detail::Planar u1 = detail::to_planar(phi1.displacement().values(), g.dim);
  const detail::Planar p = detail::to_planar(phi2.coords(), g.dim);
  const detail::Planar s = detail::sample_planar(g, u1, p);
  std::vector<double> c(phi2.coords().begin(), phi2.coords().end());
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    for (int a = 0; a < g.dim; ++a) c[i * g.dim + a] += s.c[a][i];
  return DeformationMap(g, std::move(c));
}

VectorField spatial_gradient(const ScalarImage& img) {
  const GridGeometry& g = img.geometry();
  detail::Planar grad(g.dim, g.voxel_count());
  for (int a = 0; a < g.dim; ++a) detail::diff_clamped(img.values(), grad.c[a], g, a);
  VectorField out(g);
  detail::from_planar(grad, out.values());
  return out;
}

namespace {

double det(const std::array<std::array<double, 3>, 3>& m, int d) {
  if (d == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

}  // namespace

ScalarImage jacobian_determinant(const DeformationMap& map) {
  const GridGeometry& g = map.geometry();
  const int d = g.dim;
  const std::size_t n = g.voxel_count();
  const detail::Planar c = detail::to_planar(map.coords(), d);
  // partial[comp][axis]
  std::array<std::array<detail::Component, 3>, 3> partial;
  for (int comp = 0; comp < d; ++comp)
    for (int a = 0; a < d; ++a) {
      partial[comp][a].resize(n);
      detail::diff_clamped(c.c[comp], partial[comp][a], g, a);
    }
  std::vector<double> out(n);
  std::array<std::array<double, 3>, 3> m{};
  for (std::size_t i = 0; i < n; ++i) {
    for (int comp = 0; comp < d; ++comp)
      for (int a = 0; a < d; ++a) m[comp][a] = partial[comp][a][i];
    out[i] = det(m, d);
  }
  return ScalarImage(g, std::move(out));
}

double min_interior_jacobian(const DeformationMap& map) {
  const GridGeometry& g = map.geometry();
  const ScalarImage jac = jacobian_determinant(map);
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    const auto idx = g.unravel(i);
    bool interior = true;
    for (int a = 0; a < g.dim; ++a) interior = interior && idx[a] > 0 && idx[a] < g.sizes[a] - 1;
    if (interior) lo = std::min(lo, jac[i]);
  }
  return lo;
}

ScalarImage histogram_equalize(const ScalarImage& img, int bins) {
  if (bins < 2) throw InvalidArgument("histogram_equalize needs at least 2 bins");
  const auto v = img.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return ScalarImage(img.geometry());
  auto bin_of = [&](double x) {
    const int b = static_cast<int>((x - lo) / (hi - lo) * bins);
    return std::clamp(b, 0, bins - 1);
  };
  std::vector<double> cdf(bins, 0.0);
  for (double x : v) cdf[bin_of(x)] += 1.0;
  std::partial_sum(cdf.begin(), cdf.end(), cdf.begin());
  for (double& c : cdf) c /= static_cast<double>(v.size());
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = cdf[bin_of(v[i])];
  return ScalarImage(img.geometry(), std::move(out));
}

double ssd(const ScalarImage& a, const ScalarImage& b) {
  require_same_geometry(a.geometry(), b.geometry(), "ssd");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - b[i];
    s += r * r;
  }
  return s * a.geometry().voxel_volume();
}

}  // namespace quicksilver
