#include "quicksilver/detail/stencil.hpp"

#include <algorithm>

namespace quicksilver::detail {

Planar to_planar(std::span<const double> interleaved, int dim) {
  const std::size_t n = interleaved.size() / dim;
  Planar p(dim, n);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < dim; ++a) p.c[a][i] = interleaved[i * dim + a];
  return p;
}

void from_planar(const Planar& p, std::span<double> interleaved) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < p.dim; ++a) interleaved[i * p.dim + a] = p.c[a][i];
}

void axpy(double s, const Planar& in, Planar& out) {
  for (int a = 0; a < in.dim; ++a) {
    const double* x = in.c[a].data();
    double* y = out.c[a].data();
    const std::size_t n = in.c[a].size();
    for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
  }
}

bool all_finite(const Planar& p) {
  for (int a = 0; a < p.dim; ++a)
    for (double v : p.c[a])
      if (!std::isfinite(v)) return false;
  return true;
}

Planar grid_positions(const GridGeometry& geom) {
  const std::size_t n = geom.voxel_count();
  Planar p(geom.dim, n);
  for (int a = 0; a < geom.dim; ++a) {
    const std::size_t stride = geom.stride(a);
    const std::size_t len = geom.sizes[a];
    for (std::size_t i = 0; i < n; ++i) p.c[a][i] = static_cast<double>((i / stride) % len) * geom.spacing[a];
  }
  return p;
}

namespace {

struct AxisLines {
  std::size_t outer, len, inner;
};

AxisLines lines(const GridGeometry& geom, int axis) {
  const std::size_t inner = geom.stride(axis);
  const std::size_t len = geom.sizes[axis];
  return {geom.voxel_count() / (inner * len), len, inner};
}

}  // namespace

void diff_clamped(std::span<const double> f, std::span<double> out, const GridGeometry& geom,
                  int axis) {
  const auto [outer, len, inner] = lines(geom, axis);
  const double h = geom.spacing[axis];
  const double inv_h = 1.0 / h, inv_2h = 0.5 / h;
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * len * inner;
    for (std::size_t r = 0; r < inner; ++r) {
      const double* fl = f.data() + base + r;
      double* ol = out.data() + base + r;
      ol[0] = (fl[inner] - fl[0]) * inv_h;
      for (std::size_t i = 1; i + 1 < len; ++i) ol[i * inner] = (fl[(i + 1) * inner] - fl[(i - 1) * inner]) * inv_2h;
      ol[(len - 1) * inner] = (fl[(len - 1) * inner] - fl[(len - 2) * inner]) * inv_h;
    }
  }
}

void diff_periodic(std::span<const double> f, std::span<double> out, const GridGeometry& geom,
                   int axis) {
  std::fill(out.begin(), out.end(), 0.0);
  diff_periodic_add(f, out, geom, axis, 1.0);
}

void diff_periodic_add(std::span<const double> f, std::span<double> out, const GridGeometry& geom,
                       int axis, double scale) {
  const auto [outer, len, inner] = lines(geom, axis);
  const double c = scale * 0.5 / geom.spacing[axis];
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) {
      const double* fl = f.data() + o * len;
      double* ol = out.data() + o * len;
      ol[0] += c * (fl[1] - fl[len - 1]);
      for (std::size_t i = 1; i + 1 < len; ++i) ol[i] += c * (fl[i + 1] - fl[i - 1]);
      ol[len - 1] += c * (fl[0] - fl[len - 2]);
    }
    return;
  }
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * len * inner;
    const double* fl = f.data() + base;
    double* ol = out.data() + base;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t ip = (i + 1 == len ? 0 : i + 1) * inner;
      const std::size_t im = (i == 0 ? len - 1 : i - 1) * inner;
      double* dst = ol + i * inner;
      for (std::size_t r = 0; r < inner; ++r) dst[r] += c * (fl[ip + r] - fl[im + r]);
    }
  }
}

namespace {

struct AxisWeights {
  std::size_t base;  // lower corner along the axis
  double w0, w1, slope;
};

inline AxisWeights axis_weights(double pos, int n, double h) {
  double x = pos / h;
  const double rx = std::floor(x + 0.5);
  if (std::abs(x - rx) <= 1e-12 * std::max(1.0, std::abs(x))) x = rx;
  double slope = 1.0 / h;
  if (x <= 0.0) {
    if (x < 0.0) slope = 0.0;
    x = 0.0;
  } else if (x >= n - 1) {
    if (x > n - 1) slope = 0.0;
    x = n - 1;
  }
  std::size_t base = static_cast<std::size_t>(x);
  if (base > static_cast<std::size_t>(n - 2)) base = n - 2;
  const double t = x - static_cast<double>(base);
  return {base, 1.0 - t, t, slope};
}

InterpStencil build_stencil2(const GridGeometry& geom, const double* pos, bool with_slope) {
  const std::size_t s0 = geom.sizes[1];
  const AxisWeights a = axis_weights(pos[0], geom.sizes[0], geom.spacing[0]);
  const AxisWeights b = axis_weights(pos[1], geom.sizes[1], geom.spacing[1]);
  InterpStencil s;
  s.corners = 4;
  const std::size_t i00 = a.base * s0 + b.base;
  s.index[0] = i00;
  s.index[1] = i00 + 1;
  s.index[2] = i00 + s0;
  s.index[3] = i00 + s0 + 1;
  s.weight[0] = a.w0 * b.w0;
  s.weight[1] = a.w0 * b.w1;
  s.weight[2] = a.w1 * b.w0;
  s.weight[3] = a.w1 * b.w1;
  if (with_slope) {
    s.dweight[0][0] = -a.slope * b.w0;
    s.dweight[0][1] = -a.slope * b.w1;
    s.dweight[0][2] = a.slope * b.w0;
    s.dweight[0][3] = a.slope * b.w1;
    s.dweight[1][0] = -a.w0 * b.slope;
    s.dweight[1][1] = a.w0 * b.slope;
    s.dweight[1][2] = -a.w1 * b.slope;
    s.dweight[1][3] = a.w1 * b.slope;
  }
  return s;
}

InterpStencil build_stencil3(const GridGeometry& geom, const double* pos, bool with_slope) {
  const std::size_t stride[3] = {static_cast<std::size_t>(geom.sizes[1]) * geom.sizes[2],
                                 static_cast<std::size_t>(geom.sizes[2]), 1};
  AxisWeights ax[3];
  for (int a = 0; a < 3; ++a) ax[a] = axis_weights(pos[a], geom.sizes[a], geom.spacing[a]);
  InterpStencil s;
  s.corners = 8;
  for (int k = 0; k < 8; ++k) {
    std::size_t idx = 0;
    double wk = 1.0;
    for (int a = 0; a < 3; ++a) {
      const bool bit = (k >> (2 - a)) & 1;
      idx += (ax[a].base + bit) * stride[a];
      wk *= bit ? ax[a].w1 : ax[a].w0;
    }
    s.index[k] = idx;
    s.weight[k] = wk;
  }
  if (with_slope) {
    for (int a = 0; a < 3; ++a)
      for (int k = 0; k < 8; ++k) {
        double dk = 1.0;
        for (int b = 0; b < 3; ++b) {
          const bool bit = (k >> (2 - b)) & 1;
          dk *= (b == a) ? (bit ? ax[b].slope : -ax[b].slope) : (bit ? ax[b].w1 : ax[b].w0);
        }
        s.dweight[a][k] = dk;
      }
  }
  return s;
}

}  // namespace

InterpStencil make_stencil(const GridGeometry& geom, const double* pos, bool with_slope) {
  return geom.dim == 2 ? build_stencil2(geom, pos, with_slope) : build_stencil3(geom, pos, with_slope);
}

Planar sample_planar(const GridGeometry& geom, const Planar& field, const Planar& positions) {
  const std::size_t n = positions.size();
  const int d = geom.dim;
  Planar out(field.dim, n);
  double pos[3];
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < d; ++a) pos[a] = positions.c[a][i];
    const InterpStencil s = make_stencil(geom, pos);
    for (int c = 0; c < field.dim; ++c) out.c[c][i] = s.sample(field.c[c].data());
  }
  return out;
}

}  // namespace quicksilver::detail
