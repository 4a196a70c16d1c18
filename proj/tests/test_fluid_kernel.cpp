#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "doctest.h"
#include "quicksilver/error.hpp"
#include "quicksilver/fluid_kernel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace quicksilver;

namespace {

using oracles::dense_L;

Eigen::VectorXd as_vec(const VectorField& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.values().data(), f.values().size());
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

VectorField periodic_shift(const VectorField& f, std::array<int, 3> off) {
  const auto& g = f.geometry();
  VectorField out(g);
  for (std::size_t v = 0; v < g.voxel_count(); ++v) {
    auto idx = g.unravel(v);
    std::size_t dst = 0;
    for (int a = 0; a < g.dim; ++a) dst += ((idx[a] + off[a]) % g.sizes[a]) * g.stride(a);
    for (int c = 0; c < g.dim; ++c) out.at(dst, c) = f.at(v, c);
  }
  return out;
}

}  // namespace

TEST_CASE("spectral operators equal dense periodic stencil matrices") {
  std::mt19937_64 rng(21);
  const FluidKernel::Params params{0.01, 0.01, 0.001};
  const std::array<int, 2> s2{8, 8};
  const std::array<double, 2> h2{1.0, 0.7};
  const std::array<int, 3> s3{4, 5, 4};
  const std::array<double, 3> h3{1.0, 1.3, 0.9};
  for (const auto& g : {GridGeometry::make(s2, h2), GridGeometry::make(s3, h3), GridGeometry::cube(2, 8)}) {
    for (const auto& prm : {params, FluidKernel::Params{0.3, 0.7, 0.05}}) {
      const FluidKernel k(g, prm);
      const Eigen::MatrixXd L = dense_L(g, prm);
      const Eigen::MatrixXd K = L.inverse();
      for (int trial = 0; trial < 3; ++trial) {
        const auto v = testutil::random_field(g, rng);
        const auto Lv = k.apply_L(v);
        const auto Kv = k.apply_K(v);
        const Eigen::VectorXd Lv_ref = L * as_vec(v), Kv_ref = K * as_vec(v);
        CHECK((as_vec(Lv) - Lv_ref).cwiseAbs().maxCoeff() < 1e-10);
        // K amplifies by up to 1/c; compare relative to the output scale.
        CHECK((as_vec(Kv) - Kv_ref).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, Kv_ref.cwiseAbs().maxCoeff()));
        CHECK(max_abs_diff(k.apply_K(Lv).values(), v.values()) < 1e-10);
        CHECK(max_abs_diff(k.apply_L(Kv).values(), v.values()) < 1e-10);
      }
    }
  }
}

TEST_CASE("per-frequency symbols invert each other") {
  const auto g = GridGeometry::cube(2, 16);
  const FluidKernel k(g, {});
  const int d = g.dim;
  double worst = 0.0;
  for (std::size_t f = 0; f < k.frequency_count(); ++f) {
    const auto L = k.l_symbol(f), K = k.k_symbol(f);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += L[r * d + j] * K[j * d + c];
        worst = std::max(worst, std::abs(s - (r == c ? 1.0 : 0.0)));
      }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("constants are eigenvectors") {
  const auto g = GridGeometry::cube(2, 12);
  const FluidKernel k(g, {});
  VectorField ones(g, std::vector<double>(g.voxel_count() * 2, 1.0));
  const auto Kones = k.apply_K(ones), Lones = k.apply_L(ones);
  for (double v : Kones.values()) CHECK(v == doctest::Approx(1000.0).epsilon(1e-12));
  for (double v : Lones.values()) CHECK(v == doctest::Approx(0.001).epsilon(1e-12));

  // No derivative terms: L = c Id.
  std::mt19937_64 rng(1);
  const FluidKernel k0(g, {0.0, 0.0, 2.0});
  const auto m = testutil::random_field(g, rng);
  const auto Km = k0.apply_K(m);
  for (std::size_t i = 0; i < m.values().size(); ++i) CHECK(std::abs(Km.values()[i] - m.values()[i] / 2.0) < 1e-14);
}

TEST_CASE("parameter validation") {
  const auto g = GridGeometry::cube(2, 8);
  CHECK_NOTHROW(make_kernel(g, 0.01, 0.01, 0.001));
  try {
    make_kernel(g, 0.01, 0.01, 0.0);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()) == "operator not invertible");
  }
  CHECK_THROWS_AS(make_kernel(g, 0.01, 0.01, -1.0), InvalidArgument);
  const FluidKernel k(g, {});
  CHECK_THROWS_AS(k.apply_K(VectorField(GridGeometry::cube(2, 9))), GeometryMismatch);
}

TEST_CASE("self-adjointness, positivity and pairing symmetry") {
  std::mt19937_64 rng(4);
  for (int dim : {2, 3}) {
    const auto g = GridGeometry::cube(dim, dim == 2 ? 16 : 8, 0.8);
    const FluidKernel k(g, {0.02, 0.05, 0.01});
    for (int trial = 0; trial < 5; ++trial) {
      const auto u = testutil::random_field(g, rng), w = testutil::random_field(g, rng);
      const double lhs = testutil::dot(k.apply_L(u).values(), w.values());
      const double rhs = testutil::dot(u.values(), k.apply_L(w).values());
      CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
      CHECK(std::abs(k.pairing(u, w) - k.pairing(w, u)) < 1e-10 * std::max(1.0, std::abs(k.pairing(u, w))));
      CHECK(k.pairing(u, u) > 0.0);
      CHECK(k.pairing(VectorField(g), u) == 0.0);
    }
  }
}

TEST_CASE("pairing includes the voxel volume") {
  std::mt19937_64 rng(8);
  const std::array<int, 2> s{8, 8};
  const std::array<double, 2> h{0.5, 2.0};
  const auto g = GridGeometry::make(s, h);
  const FluidKernel k(g, {});
  const auto m = testutil::random_field(g, rng);
  const double ref = testutil::dot(m.values(), k.apply_K(m).values()) * g.voxel_volume();
  CHECK(k.pairing(m, m) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("translation equivariance under periodic shifts") {
  std::mt19937_64 rng(9);
  const auto g = GridGeometry::cube(2, 16);
  const FluidKernel k(g, {});
  const auto m = testutil::random_field(g, rng);
  const std::array<int, 3> off{3, 11, 0};
  const auto a = k.apply_K(periodic_shift(m, off));
  const auto b = periodic_shift(k.apply_K(m), off);
  CHECK(max_abs_diff(a.values(), b.values()) < 1e-10 * 1000.0);
}

TEST_CASE("K smooths an impulse") {
  const auto g = GridGeometry::cube(2, 8);
  const FluidKernel::Params prm{};
  const FluidKernel k(g, prm);
  VectorField impulse(g);
  const std::size_t centre = 4 * 8 + 4;
  impulse.at(centre, 0) = 1.0;
  const auto Km = k.apply_K(impulse);
  const Eigen::VectorXd ref = dense_L(g, prm).inverse() * as_vec(impulse);
  CHECK((as_vec(Km) - ref).cwiseAbs().maxCoeff() < 1e-9);
  // Peak at the impulse, positive and decaying along both axes.
  for (std::size_t v = 0; v < g.voxel_count(); ++v) {
    CHECK(Km.at(v, 0) > 0.0);
    CHECK(Km.at(v, 0) <= Km.at(centre, 0));
  }
  for (int step = 0; step < 3; ++step) {
    CHECK(Km.at(centre + step + 1, 0) < Km.at(centre + step, 0));
    CHECK(Km.at(centre - 8 * (step + 1), 0) < Km.at(centre - 8 * step, 0));
  }
}
