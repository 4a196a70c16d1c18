#include "quicksilver/fluid_kernel.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "quicksilver/error.hpp"

namespace quicksilver {

namespace {

// The FFTW planner is not re-entrant; executing existing plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

bool invert(const std::array<double, 9>& m, int d, std::array<double, 9>& inv) {
  if (d == 2) {
    const double det = m[0] * m[3] - m[1] * m[2];
    if (!(std::abs(det) > 0.0)) return false;
    inv = {m[3] / det, -m[1] / det, -m[2] / det, m[0] / det, 0, 0, 0, 0, 0};
    return true;
  }
  const double c00 = m[4] * m[8] - m[5] * m[7];
  const double c01 = m[5] * m[6] - m[3] * m[8];
  const double c02 = m[3] * m[7] - m[4] * m[6];
  const double det = m[0] * c00 + m[1] * c01 + m[2] * c02;
  if (!(std::abs(det) > 0.0)) return false;
  inv = {c00 / det,
         (m[2] * m[7] - m[1] * m[8]) / det,
         (m[1] * m[5] - m[2] * m[4]) / det,
         c01 / det,
         (m[0] * m[8] - m[2] * m[6]) / det,
         (m[2] * m[3] - m[0] * m[5]) / det,
         c02 / det,
         (m[1] * m[6] - m[0] * m[7]) / det,
         (m[0] * m[4] - m[1] * m[3]) / det};
  return true;
}

}  // namespace

struct FluidKernel::Impl {
  int dim = 2;
  std::size_t n_real = 0;
  std::size_t n_freq = 0;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  // d*d entries per stored frequency, row-major.
  std::vector<double> l_table;
  std::vector<double> k_table;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

FluidKernel::FluidKernel(const GridGeometry& geom, Params params) : geom_(geom), params_(params) {
  if (!(params.c > 0.0)) throw InvalidArgument("operator not invertible");
  if (params.a < 0.0 || params.b < 0.0) throw InvalidArgument("kernel a and b must be >= 0");

  auto impl = std::make_shared<Impl>();
  const int d = geom.dim;
  impl->dim = d;
  impl->n_real = geom.voxel_count();
  const int last = geom.sizes[d - 1];
  impl->n_freq = impl->n_real / last * (last / 2 + 1);

  {
    std::lock_guard lock(planner_mutex());
    FftwBuffer real(impl->n_real * sizeof(double));
    FftwBuffer spec(impl->n_freq * sizeof(fftw_complex));
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    impl->forward = fftw_plan_dft_r2c(d, geom.sizes.data(), static_cast<double*>(real.ptr),
                                      static_cast<fftw_complex*>(spec.ptr), flags);
    impl->backward = fftw_plan_dft_c2r(d, geom.sizes.data(), static_cast<fftw_complex*>(spec.ptr),
                                       static_cast<double*>(real.ptr), flags);
  }
  if (!impl->forward || !impl->backward) throw Error("FFTW planning failed for " + geom.describe());

  impl->l_table.resize(impl->n_freq * d * d);
  impl->k_table.resize(impl->n_freq * d * d);

  // Half-spectrum layout: all axes full except the last, which keeps n/2+1.
  std::array<int, 3> fsizes = geom.sizes;
  fsizes[d - 1] = last / 2 + 1;
  for (std::size_t f = 0; f < impl->n_freq; ++f) {
    std::size_t rem = f;
    std::array<double, 3> second{};  // 2 - 2 cos(w) over h^2
    std::array<double, 3> central{};  // sin(w) / h
    for (int a = d - 1; a >= 0; --a) {
      const int k = static_cast<int>(rem % fsizes[a]);
      rem /= fsizes[a];
      const double w = 2.0 * std::numbers::pi * k / geom.sizes[a];
      const double h = geom.spacing[a];
      second[a] = (2.0 - 2.0 * std::cos(w)) / (h * h);
      central[a] = std::sin(w) / h;
    }
    double lap = 0.0;
    for (int a = 0; a < d; ++a) lap += second[a];
    std::array<double, 9> sym{};
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        double graddiv = (r == c) ? second[r] : central[r] * central[c];
        sym[r * d + c] = params.b * graddiv + ((r == c) ? params.a * lap + params.c : 0.0);
      }
    std::array<double, 9> inv{};
    if (!invert(sym, d, inv)) throw InvalidArgument("operator not invertible");
    for (int i = 0; i < d * d; ++i) {
      impl->l_table[f * d * d + i] = sym[i];
      impl->k_table[f * d * d + i] = inv[i];
    }
  }
  impl_ = std::move(impl);
}

FluidKernel make_kernel(const GridGeometry& geom, double a, double b, double c) {
  return FluidKernel(geom, FluidKernel::Params{a, b, c});
}

std::size_t FluidKernel::frequency_count() const { return impl_->n_freq; }

std::array<double, 9> FluidKernel::l_symbol(std::size_t k) const {
  std::array<double, 9> out{};
  const int dd = geom_.dim * geom_.dim;
  for (int i = 0; i < dd; ++i) out[i] = impl_->l_table[k * dd + i];
  return out;
}

std::array<double, 9> FluidKernel::k_symbol(std::size_t k) const {
  std::array<double, 9> out{};
  const int dd = geom_.dim * geom_.dim;
  for (int i = 0; i < dd; ++i) out[i] = impl_->k_table[k * dd + i];
  return out;
}

void FluidKernel::apply(const detail::Planar& in, detail::Planar& out, bool inverse) const {
  const Impl& im = *impl_;
  const int d = im.dim;
  if (in.dim != d || in.size() != im.n_real) throw GeometryMismatch("fluid kernel input does not match grid");
  if (out.dim != d || out.size() != im.n_real) out = detail::Planar(d, im.n_real);

  using cplx = std::complex<double>;
  std::vector<std::vector<cplx>> spec(d, std::vector<cplx>(im.n_freq));
  std::vector<double> scratch(im.n_real);
  for (int a = 0; a < d; ++a) {
    std::copy(in.c[a].begin(), in.c[a].end(), scratch.begin());
    fftw_execute_dft_r2c(im.forward, scratch.data(), reinterpret_cast<fftw_complex*>(spec[a].data()));
  }
  const std::vector<double>& table = inverse ? im.k_table : im.l_table;
  std::vector<cplx> mixed(im.n_freq);
  const double norm = 1.0 / static_cast<double>(im.n_real);
  for (int r = 0; r < d; ++r) {
    for (std::size_t f = 0; f < im.n_freq; ++f) {
      const double* row = table.data() + f * d * d + r * d;
      cplx acc = 0.0;
      for (int c = 0; c < d; ++c) acc += row[c] * spec[c][f];
      mixed[f] = acc * norm;
    }
    fftw_execute_dft_c2r(im.backward, reinterpret_cast<fftw_complex*>(mixed.data()), out.c[r].data());
  }
}

void FluidKernel::apply_L(const detail::Planar& in, detail::Planar& out) const { apply(in, out, false); }
void FluidKernel::apply_K(const detail::Planar& in, detail::Planar& out) const { apply(in, out, true); }

double FluidKernel::pairing(const detail::Planar& m1, const detail::Planar& m2) const {
  detail::Planar km2;
  apply_K(m2, km2);
  double s = 0.0;
  for (int a = 0; a < m1.dim; ++a)
    for (std::size_t i = 0; i < m1.size(); ++i) s += m1.c[a][i] * km2.c[a][i];
  return s * geom_.voxel_volume();
}

VectorField FluidKernel::apply_L(const VectorField& v) const {
  require_same_geometry(geom_, v.geometry(), "apply_L");
  detail::Planar out;
  apply(detail::to_planar(v.values(), geom_.dim), out, false);
  VectorField res(geom_);
  detail::from_planar(out, res.values());
  return res;
}

VectorField FluidKernel::apply_K(const VectorField& m) const {
  require_same_geometry(geom_, m.geometry(), "apply_K");
  detail::Planar out;
  apply(detail::to_planar(m.values(), geom_.dim), out, true);
  VectorField res(geom_);
  detail::from_planar(out, res.values());
  return res;
}

double FluidKernel::pairing(const VectorField& m1, const VectorField& m2) const {
  require_same_geometry(geom_, m1.geometry(), "pairing");
  require_same_geometry(geom_, m2.geometry(), "pairing");
  return pairing(detail::to_planar(m1.values(), geom_.dim), detail::to_planar(m2.values(), geom_.dim));
}

}  // namespace quicksilver
