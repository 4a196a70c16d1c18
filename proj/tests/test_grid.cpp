#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "quicksilver/error.hpp"
#include "quicksilver/grid.hpp"
#include "quicksilver/qsf.hpp"
#include "test_util.hpp"

using namespace quicksilver;

TEST_CASE("identity map holds physical voxel positions") {
  const auto g = GridGeometry::cube(2, 4);
  const auto id = identity_map(g);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const std::size_t v = i * 4 + j;
      CHECK(id.at(v, 0) == i);
      CHECK(id.at(v, 1) == j);
    }

  const std::array<int, 3> sizes{5, 6, 7};
  const std::array<double, 3> spacing{0.5, 1.25, 2.0};
  const auto g3 = GridGeometry::make(sizes, spacing);
  const auto id3 = identity_map(g3);
  const auto idx = g3.unravel(100);
  for (int a = 0; a < 3; ++a) CHECK(id3.at(100, a) == idx[a] * spacing[a]);
}

TEST_CASE("geometry validation") {
  const std::array<int, 2> small{3, 8};
  CHECK_THROWS_AS(GridGeometry::make(small), InvalidArgument);
  const std::array<int, 1> one{8};
  CHECK_THROWS_AS(GridGeometry::make(one), InvalidArgument);
  const std::array<int, 2> ok{8, 8};
  const std::array<double, 2> bad{1.0, 0.0};
  CHECK_THROWS_AS(GridGeometry::make(ok, bad), InvalidArgument);
}

TEST_CASE("warp with the identity map is the identity (bitwise)") {
  std::mt19937_64 rng(3);
  for (int dim : {2, 3}) {
    const std::array<int, 3> sizes{9, 7, 6};
    const std::array<double, 3> spacing{0.7, 1.3, 0.9};
    const auto g = GridGeometry::make(std::span(sizes.data(), dim), std::span(spacing.data(), dim));
    const auto img = testutil::random_image(g, rng);
    const auto warped = warp_image(img, identity_map(g));
    for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(warped[i] == img[i]);
  }
}

TEST_CASE("interpolation reproduces constants and ramps") {
  std::mt19937_64 rng(5);
  const auto g = GridGeometry::cube(2, 12, 1.5);
  std::uniform_real_distribution<double> U(-4.0, 20.0);
  std::vector<double> pos(g.voxel_count() * 2);
  for (double& p : pos) p = U(rng);
  const DeformationMap map(g, pos);

  SUBCASE("constant") {
    const ScalarImage c(g, std::vector<double>(g.voxel_count(), 2.75));
    const auto out = interpolate_scalar(c, map);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - 2.75) < 1e-12);
  }
  SUBCASE("ramp f(x) = x0 sampled at in-domain shifted positions") {
    std::vector<double> ramp(g.voxel_count());
    const auto id = identity_map(g);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = id.at(i, 0);
    const ScalarImage img(g, ramp);
    std::vector<double> shifted(id.coords().begin(), id.coords().end());
    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
      shifted[i * 2 + 0] += 0.37;
      shifted[i * 2 + 1] -= 0.81;
    }
    const auto out = interpolate_scalar(img, DeformationMap(g, shifted));
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto idx = g.unravel(i);
      if (idx[0] >= 1 && idx[0] <= 9 && idx[1] >= 1 && idx[1] <= 10) CHECK(std::abs(out[i] - shifted[i * 2]) < 1e-12);
    }
  }
}

TEST_CASE("warp by a one-voxel shift moves a ramp by one spacing unit") {
  const std::array<int, 2> sizes{10, 8};
  const std::array<double, 2> spacing{2.0, 1.0};
  const auto g = GridGeometry::make(sizes, spacing);
  const auto id = identity_map(g);
  std::vector<double> ramp(g.voxel_count()), coords(id.coords().begin(), id.coords().end());
  for (std::size_t i = 0; i < ramp.size(); ++i) {
    ramp[i] = 0.5 * id.at(i, 0) + 0.1 * id.at(i, 1);
    coords[i * 2] += spacing[0];
  }
  const auto out = warp_image(ScalarImage(g, ramp), DeformationMap(g, coords));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto idx = g.unravel(i);
    // manually shifted array: row i takes row i+1
    if (idx[0] < sizes[0] - 1) CHECK(out[i] == doctest::Approx(ramp[i + g.stride(0)]).epsilon(1e-14));
  }
}

TEST_CASE("spatial gradient") {
  const auto g = GridGeometry::cube(2, 32);
  SUBCASE("constant image") {
    const auto grad = spatial_gradient(ScalarImage(g, std::vector<double>(g.voxel_count(), 4.0)));
    for (double v : grad.values()) CHECK(v == 0.0);
  }
  SUBCASE("ramp 3 x1") {
    std::vector<double> f(g.voxel_count());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = 3.0 * g.unravel(i)[1];
    const auto grad = spatial_gradient(ScalarImage(g, f));
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(grad.at(i, 0) == doctest::Approx(0.0));
      CHECK(grad.at(i, 1) == doctest::Approx(3.0));
    }
  }
  SUBCASE("sine against its analytic derivative") {
    const double w = 2.0 * std::numbers::pi / 32.0;
    std::vector<double> f(g.voxel_count());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(w * g.unravel(i)[0]);
    const auto grad = spatial_gradient(ScalarImage(g, f));
    double err = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
      err = std::max(err, std::abs(grad.at(i, 0) - w * std::cos(w * g.unravel(i)[0])));
    CHECK(err < 0.05);
  }
}

TEST_CASE("jacobian determinant of affine maps equals det(A)") {
  SUBCASE("identity") {
    const auto jac = jacobian_determinant(identity_map(GridGeometry::cube(3, 6)));
    for (double v : jac.values()) CHECK(v == doctest::Approx(1.0));
  }
  SUBCASE("uniform scaling by 2") {
    for (int dim : {2, 3}) {
      const auto g = GridGeometry::cube(dim, 7);
      auto id = identity_map(g);
      std::vector<double> c(id.coords().begin(), id.coords().end());
      for (double& x : c) x *= 2.0;
      const auto jac = jacobian_determinant(DeformationMap(g, c));
      for (double v : jac.values()) CHECK(v == doctest::Approx(std::pow(2.0, dim)));
    }
  }
  SUBCASE("random affine maps") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const std::array<int, 3> sizes{6, 7, 8};
      const std::array<double, 3> spacing{0.8, 1.0, 1.7};
      const auto g = GridGeometry::make(sizes, spacing);
      double A[3][3], b[3];
      for (auto& row : A)
        for (double& v : row) v = U(rng);
      for (double& v : b) v = U(rng);
      const double detA = A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1]) -
                          A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0]) +
                          A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0]);
      const auto id = identity_map(g);
      std::vector<double> c(id.coords().size());
      for (std::size_t i = 0; i < g.voxel_count(); ++i)
        for (int r = 0; r < 3; ++r) {
          double s = b[r];
          for (int k = 0; k < 3; ++k) s += A[r][k] * id.at(i, k);
          c[i * 3 + r] = s;
        }
      const auto jac = jacobian_determinant(DeformationMap(g, c));
      for (std::size_t i = 0; i < jac.size(); ++i) CHECK(std::abs(jac[i] - detA) < 1e-10);
    }
  }
}

TEST_CASE("histogram equalization") {
  const auto g = GridGeometry::cube(2, 16);
  SUBCASE("uniform input is a fixed point up to binning") {
    std::vector<double> f(g.voxel_count());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(i) / (f.size() - 1);
    const int bins = 64;
    const auto out = histogram_equalize(ScalarImage(g, f), bins);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(out[i] - f[i]) <= 1.0 / bins + 1e-12);
  }
  SUBCASE("constant image maps to zeros") {
    const auto out = histogram_equalize(ScalarImage(g, std::vector<double>(g.voxel_count(), 7.0)), 32);
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("two-valued image") {
    std::vector<double> f(g.voxel_count(), 0.0);
    for (std::size_t i = f.size() / 2; i < f.size(); ++i) f[i] = 10.0;
    const auto out = histogram_equalize(ScalarImage(g, f), 16);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[f.size() - 1] == doctest::Approx(1.0));
  }
  SUBCASE("monotone and tie-preserving") {
    std::mt19937_64 rng(2);
    const auto img = testutil::random_image(g, rng);
    const auto out = histogram_equalize(img, 32);
    for (std::size_t i = 0; i < img.size(); ++i)
      for (std::size_t j = 0; j < img.size(); j += 17) {
        if (img[i] < img[j]) CHECK(out[i] <= out[j]);
        if (img[i] == img[j]) CHECK(out[i] == out[j]);
      }
    for (double v : out.values()) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK_THROWS_AS(histogram_equalize(ScalarImage(g), 1), InvalidArgument);
}

TEST_CASE("QSF encodes a 2x2 scalar image to the documented bytes") {
  QsfRecord rec;
  rec.dim = 2;
  rec.sizes = {2, 2};
  rec.spacing = {1.0, 1.0};
  rec.channels = 1;
  rec.kind = FieldKind::Image;
  rec.data = {0.0f, 1.0f, 2.0f, 3.0f};
  std::string expected = "QSF 1\ndim 2\nsizes 2 2\nspacing 1 1\nchannels 1\nkind image\ndata\n";
  const unsigned char payload[] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3f,
                                   0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x40, 0x40};
  expected.append(reinterpret_cast<const char*>(payload), sizeof payload);
  CHECK(encode_qsf(rec) == expected);
  const auto back = decode_qsf(expected);
  CHECK(back.data == rec.data);
  CHECK(back.sizes == rec.sizes);
}

TEST_CASE("QSF round trip is bitwise for random fields") {
  std::mt19937_64 rng(17);
  const auto dir = testutil::scratch_dir("qsf_roundtrip");
  std::uniform_int_distribution<int> size(4, 9), dimd(2, 3), kindd(0, 4);
  std::uniform_real_distribution<double> h(0.25, 3.0);
  for (int trial = 0; trial < 120; ++trial) {
    QsfRecord rec;
    rec.dim = dimd(rng);
    for (int a = 0; a < rec.dim; ++a) {
      rec.sizes.push_back(size(rng));
      rec.spacing.push_back(h(rng));
    }
    rec.channels = (trial % 2) ? rec.dim : 1;
    rec.kind = static_cast<FieldKind>(kindd(rng));
    std::size_t n = rec.channels;
    for (int s : rec.sizes) n *= s;
    rec.data.resize(n);
    for (float& f : rec.data) {
      std::uint32_t bits = static_cast<std::uint32_t>(rng());
      std::memcpy(&f, &bits, 4);
      if (!std::isfinite(f)) f = 1.5f;
    }
    const auto path = dir / ("f" + std::to_string(trial) + ".qsf");
    write_qsf(rec, path);
    const auto back = read_qsf(path);
    REQUIRE(back.sizes == rec.sizes);
    REQUIRE(back.spacing == rec.spacing);
    REQUIRE(back.channels == rec.channels);
    REQUIRE(back.kind == rec.kind);
    REQUIRE(std::memcmp(back.data.data(), rec.data.data(), n * 4) == 0);
  }

  // Typed round trip: values representable in float32 survive unchanged.
  const auto g = GridGeometry::cube(3, 5, 0.75);
  std::vector<double> vals(g.voxel_count() * 3);
  for (double& v : vals) v = static_cast<float>(std::uniform_real_distribution<double>(-3, 3)(rng));
  const VectorField f(g, vals);
  write_field(f, dir / "typed.qsf");
  const auto back = read_vector(dir / "typed.qsf");
  CHECK(back.geometry() == g);
  CHECK(std::equal(vals.begin(), vals.end(), back.values().begin()));
}

TEST_CASE("QSF errors are reported distinctly") {
  auto kind_of = [](const std::string& bytes) {
    try {
      decode_qsf(bytes);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("no error");
    return FormatError::Kind::Io;
  };
  const std::string header = "QSF 1\ndim 2\nsizes 2 2\nspacing 1 1\n";
  const std::string one_channel(16, '\0');

  CHECK(kind_of("QSG 1\n" + header.substr(6)) == FormatError::Kind::BadMagic);
  CHECK(kind_of("QSF 1\ndim 2\nsizes 2 2 2\nspacing 1 1\nchannels 1\nkind image\ndata\n" + one_channel) ==
        FormatError::Kind::DimensionMismatch);
  try {
    decode_qsf(header + "channels 2\nkind momentum\ndata\n" + one_channel);
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatError::Kind::PayloadSizeMismatch);
    CHECK(std::string(e.what()) == "payload size mismatch");
  }
  CHECK(kind_of(header + "channels 1\nkind image\ndata\n" + one_channel.substr(0, 10)) == FormatError::Kind::Truncated);
  CHECK(kind_of(header + "channels 1\nkind banana\ndata\n" + one_channel) == FormatError::Kind::BadHeader);
  CHECK_THROWS_AS(read_qsf("/nonexistent/file.qsf"), FormatError);
}
