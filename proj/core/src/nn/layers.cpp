#include "quicksilver/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "quicksilver/error.hpp"

namespace quicksilver::nn {

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

int ConvSpec::out_extent(int in) const {
  if (transposed) return (in - 1) * stride - 2 * pad + kernel + output_pad;
  return (in + 2 * pad - kernel) / stride + 1;
}

std::vector<int> ConvSpec::weight_shape() const {
  std::vector<int> s = transposed ? std::vector<int>{in_ch, out_ch} : std::vector<int>{out_ch, in_ch};
  for (int a = 0; a < dim; ++a) s.push_back(kernel);
  return s;
}

void ConvSpec::validate() const {
  if (dim != 2 && dim != 3) throw InvalidArgument("conv: dim must be 2 or 3");
  if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1 || pad < 0 || output_pad < 0)
    throw InvalidArgument("conv: invalid spec");
  if (output_pad != 0 && (!transposed || output_pad >= stride)) throw InvalidArgument("conv: invalid output_pad");
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Geometry of an ordinary convolution from `in` to `out` extents, padded to
// three spatial axes (2D uses a unit leading axis).
struct Geo {
  int in[3], out[3], k[3], s[3], p[3];
  int K = 1;
  std::size_t n_in = 1, n_out = 1;
};

Geo make_geo(const ConvSpec& spec, const int* in, const int* out) {
  Geo g;
  const int lead = 3 - spec.dim;
  for (int a = 0; a < 3; ++a) {
    const bool real = a >= lead;
    g.in[a] = real ? in[a - lead] : 1;
    g.out[a] = real ? out[a - lead] : 1;
    g.k[a] = real ? spec.kernel : 1;
    g.s[a] = real ? spec.stride : 1;
    g.p[a] = real ? spec.pad : 0;
    g.K *= g.k[a];
    g.n_in *= g.in[a];
    g.n_out *= g.out[a];
  }
  return g;
}

template <class T>
void im2col(const T* img, int B, int C, const Geo& g, T* col) {
  const std::size_t ld = static_cast<std::size_t>(B) * g.n_out;
  for (int c = 0; c < C; ++c)
    for (int kz = 0; kz < g.k[0]; ++kz)
      for (int ky = 0; ky < g.k[1]; ++ky)
        for (int kx = 0; kx < g.k[2]; ++kx) {
          const std::size_t row = (static_cast<std::size_t>(c) * g.K + (kz * g.k[1] + ky) * g.k[2] + kx);
          T* dst = col + row * ld;
          for (int b = 0; b < B; ++b) {
            const T* src = img + (static_cast<std::size_t>(b) * C + c) * g.n_in;
            for (int oz = 0; oz < g.out[0]; ++oz) {
              const int iz = oz * g.s[0] - g.p[0] + kz;
              for (int oy = 0; oy < g.out[1]; ++oy) {
                const int iy = oy * g.s[1] - g.p[1] + ky;
                if (iz < 0 || iz >= g.in[0] || iy < 0 || iy >= g.in[1]) {
                  dst = std::fill_n(dst, g.out[2], T(0));
                  continue;
                }
                const T* srow = src + (static_cast<std::size_t>(iz) * g.in[1] + iy) * g.in[2];
                for (int ox = 0; ox < g.out[2]; ++ox) {
                  const int ix = ox * g.s[2] - g.p[2] + kx;
                  *dst++ = (ix >= 0 && ix < g.in[2]) ? srow[ix] : T(0);
                }
              }
            }
          }
        }
}

template <class T>
void col2im(const T* col, int B, int C, const Geo& g, T* img) {
  std::fill(img, img + static_cast<std::size_t>(B) * C * g.n_in, T(0));
  const std::size_t ld = static_cast<std::size_t>(B) * g.n_out;
  for (int c = 0; c < C; ++c)
    for (int kz = 0; kz < g.k[0]; ++kz)
      for (int ky = 0; ky < g.k[1]; ++ky)
        for (int kx = 0; kx < g.k[2]; ++kx) {
          const std::size_t row = (static_cast<std::size_t>(c) * g.K + (kz * g.k[1] + ky) * g.k[2] + kx);
          const T* src = col + row * ld;
          for (int b = 0; b < B; ++b) {
            T* dst = img + (static_cast<std::size_t>(b) * C + c) * g.n_in;
            for (int oz = 0; oz < g.out[0]; ++oz) {
              const int iz = oz * g.s[0] - g.p[0] + kz;
              for (int oy = 0; oy < g.out[1]; ++oy) {
                const int iy = oy * g.s[1] - g.p[1] + ky;
                if (iz < 0 || iz >= g.in[0] || iy < 0 || iy >= g.in[1]) {
                  src += g.out[2];
                  continue;
                }
                T* drow = dst + (static_cast<std::size_t>(iz) * g.in[1] + iy) * g.in[2];
                for (int ox = 0; ox < g.out[2]; ++ox, ++src) {
                  const int ix = ox * g.s[2] - g.p[2] + kx;
                  if (ix >= 0 && ix < g.in[2]) drow[ix] += *src;
                }
              }
            }
          }
        }
}

// (B, C, N) <-> (C, B*N)
template <class T>
void to_channel_major(const T* x, int B, int C, std::size_t N, T* out) {
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      std::copy_n(x + (static_cast<std::size_t>(b) * C + c) * N, N, out + (static_cast<std::size_t>(c) * B + b) * N);
}

template <class T>
void from_channel_major(const T* x, int B, int C, std::size_t N, T* out) {
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      std::copy_n(x + (static_cast<std::size_t>(c) * B + b) * N, N, out + (static_cast<std::size_t>(b) * C + c) * N);
}

void check_input(const ConvSpec& spec, const std::vector<int>& shape, const char* what) {
  if (static_cast<int>(shape.size()) != spec.dim + 2 || shape[1] != spec.in_ch)
    throw InvalidArgument(std::string("conv: ") + what + " shape " + shape_string(shape) + " does not match spec");
}

std::vector<int> output_shape(const ConvSpec& spec, const std::vector<int>& xs) {
  std::vector<int> ys{xs[0], spec.out_ch};
  for (int a = 0; a < spec.dim; ++a) {
    const int e = spec.out_extent(xs[2 + a]);
    if (e < 1) throw InvalidArgument("conv: input too small for kernel");
    ys.push_back(e);
  }
  return ys;
}

}  // namespace

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const ConvSpec& spec) {
  spec.validate();
  check_input(spec, x.shape, "input");
  if (w.shape != spec.weight_shape() || bias.numel() != static_cast<std::size_t>(spec.out_ch))
    throw InvalidArgument("conv: weight shape " + shape_string(w.shape) + " does not match spec");
  const int B = x.shape[0];
  Tensor<T> y(output_shape(spec, x.shape));
  const int* xs = x.shape.data() + 2;
  const int* ys = y.shape.data() + 2;

  if (!spec.transposed) {
    const Geo g = make_geo(spec, xs, ys);
    const std::size_t cols = static_cast<std::size_t>(B) * g.n_out;
    std::vector<T> col(static_cast<std::size_t>(spec.in_ch) * g.K * cols);
    im2col(x.data.data(), B, spec.in_ch, g, col.data());
    std::vector<T> out(static_cast<std::size_t>(spec.out_ch) * cols);
    MapMat<T>(out.data(), spec.out_ch, cols).noalias() =
        CMapMat<T>(w.data.data(), spec.out_ch, spec.in_ch * g.K) * CMapMat<T>(col.data(), spec.in_ch * g.K, cols);
    from_channel_major(out.data(), B, spec.out_ch, g.n_out, y.data.data());
  } else {
    const Geo g = make_geo(spec, ys, xs);  // the adjoint convolution maps y-space to x-space
    const std::size_t cols = static_cast<std::size_t>(B) * g.n_out;
    std::vector<T> xin(static_cast<std::size_t>(spec.in_ch) * cols);
    to_channel_major(x.data.data(), B, spec.in_ch, g.n_out, xin.data());
    std::vector<T> col(static_cast<std::size_t>(spec.out_ch) * g.K * cols);
    MapMat<T>(col.data(), spec.out_ch * g.K, cols).noalias() =
        CMapMat<T>(w.data.data(), spec.in_ch, spec.out_ch * g.K).transpose() *
        CMapMat<T>(xin.data(), spec.in_ch, cols);
    col2im(col.data(), B, spec.out_ch, g, y.data.data());
  }
  const std::size_t n = y.inner(2);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < spec.out_ch; ++c) {
      T* p = y.data.data() + (static_cast<std::size_t>(b) * spec.out_ch + c) * n;
      for (std::size_t i = 0; i < n; ++i) p[i] += bias[c];
    }
  return y;
}

template <class T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec, const Tensor<T>& gy, Tensor<T>* gx,
                   Tensor<T>& gw, Tensor<T>& gb) {
  spec.validate();
  check_input(spec, x.shape, "input");
  if (gy.shape != output_shape(spec, x.shape)) throw InvalidArgument("conv: gradient shape mismatch");
  const int B = x.shape[0];
  const int* xs = x.shape.data() + 2;
  const int* ys = gy.shape.data() + 2;
  gw = Tensor<T>(spec.weight_shape());
  gb = Tensor<T>({spec.out_ch});
  const std::size_t ny = gy.inner(2);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < spec.out_ch; ++c) {
      const T* p = gy.data.data() + (static_cast<std::size_t>(b) * spec.out_ch + c) * ny;
      T s = 0;
      for (std::size_t i = 0; i < ny; ++i) s += p[i];
      gb[c] += s;
    }

  if (!spec.transposed) {
    const Geo g = make_geo(spec, xs, ys);
    const std::size_t cols = static_cast<std::size_t>(B) * g.n_out;
    const int rows = spec.in_ch * g.K;
    std::vector<T> col(static_cast<std::size_t>(rows) * cols);
    im2col(x.data.data(), B, spec.in_ch, g, col.data());
    std::vector<T> gym(static_cast<std::size_t>(spec.out_ch) * cols);
    to_channel_major(gy.data.data(), B, spec.out_ch, g.n_out, gym.data());
    const CMapMat<T> GY(gym.data(), spec.out_ch, cols);
    MapMat<T>(gw.data.data(), spec.out_ch, rows).noalias() = GY * CMapMat<T>(col.data(), rows, cols).transpose();
    if (gx) {
      MapMat<T>(col.data(), rows, cols).noalias() = CMapMat<T>(w.data.data(), spec.out_ch, rows).transpose() * GY;
      *gx = Tensor<T>(x.shape);
      col2im(col.data(), B, spec.in_ch, g, gx->data.data());
    }
  } else {
    const Geo g = make_geo(spec, ys, xs);
    const std::size_t cols = static_cast<std::size_t>(B) * g.n_out;
    const int rows = spec.out_ch * g.K;
    std::vector<T> col(static_cast<std::size_t>(rows) * cols);
    im2col(gy.data.data(), B, spec.out_ch, g, col.data());
    std::vector<T> xin(static_cast<std::size_t>(spec.in_ch) * cols);
    to_channel_major(x.data.data(), B, spec.in_ch, g.n_out, xin.data());
    const CMapMat<T> C(col.data(), rows, cols);
    MapMat<T>(gw.data.data(), spec.in_ch, rows).noalias() = CMapMat<T>(xin.data(), spec.in_ch, cols) * C.transpose();
    if (gx) {
      MapMat<T>(xin.data(), spec.in_ch, cols).noalias() = CMapMat<T>(w.data.data(), spec.in_ch, rows) * C;
      *gx = Tensor<T>(x.shape);
      from_channel_major(xin.data(), B, spec.in_ch, g.n_out, gx->data.data());
    }
  }
}

template <class T>
Tensor<T> prelu_forward(const Tensor<T>& x, const Tensor<T>& slope) {
  if (x.rank() < 2 || slope.numel() != static_cast<std::size_t>(x.shape[1]))
    throw InvalidArgument("prelu: slope count does not match channels");
  Tensor<T> y(x.shape);
  const std::size_t n = x.inner(2);
  const int C = x.shape[1];
  for (std::size_t bc = 0; bc < static_cast<std::size_t>(x.shape[0]) * C; ++bc) {
    const T a = slope[bc % C];
    const T* src = x.data.data() + bc * n;
    T* dst = y.data.data() + bc * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > T(0) ? src[i] : a * src[i];
  }
  return y;
}

template <class T>
void prelu_backward(const Tensor<T>& x, const Tensor<T>& slope, const Tensor<T>& gy, Tensor<T>& gx,
                    Tensor<T>& gslope) {
  if (gy.shape != x.shape) throw InvalidArgument("prelu: gradient shape mismatch");
  gx = Tensor<T>(x.shape);
  gslope = Tensor<T>(slope.shape);
  const std::size_t n = x.inner(2);
  const int C = x.shape[1];
  for (std::size_t bc = 0; bc < static_cast<std::size_t>(x.shape[0]) * C; ++bc) {
    const T a = slope[bc % C];
    const T* xs = x.data.data() + bc * n;
    const T* g = gy.data.data() + bc * n;
    T* dst = gx.data.data() + bc * n;
    T ga = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (xs[i] > T(0)) {
        dst[i] = g[i];
      } else {
        dst[i] = a * g[i];
        ga += g[i] * xs[i];
      }
    }
    gslope[bc % C] += ga;
  }
}

template <class T>
Tensor<T> dropout_mask(const std::vector<int>& shape, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout probability must be in [0, 1)");
  Tensor<T> m(shape, T(1));
  if (p == 0.0) return m;
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (auto& v : m.data) v = uniform01(rng) < p ? T(0) : keep;
  return m;
}

template <class T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& truth, Tensor<T>* grad) {
  if (pred.shape != truth.shape) throw InvalidArgument("l1_loss: shape mismatch");
  const std::size_t n = pred.numel();
  if (grad) *grad = Tensor<T>(pred.shape);
  double s = 0.0;
  const T inv = static_cast<T>(1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pred[i] - truth[i];
    s += std::abs(static_cast<double>(d));
    if (grad) (*grad)[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
  }
  return s / static_cast<double>(n);
}

#define QS_INSTANTIATE(T)                                                                                      \
  template Tensor<T> conv_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&);      \
  template void conv_backward(const Tensor<T>&, const Tensor<T>&, const ConvSpec&, const Tensor<T>&, Tensor<T>*, \
                              Tensor<T>&, Tensor<T>&);                                                         \
  template Tensor<T> prelu_forward(const Tensor<T>&, const Tensor<T>&);                                        \
  template void prelu_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&);  \
  template Tensor<T> dropout_mask<T>(const std::vector<int>&, double, std::mt19937_64&);                       \
  template double l1_loss(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);

QS_INSTANTIATE(float)
QS_INSTANTIATE(double)

}  // namespace quicksilver::nn
