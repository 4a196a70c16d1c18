#include "quicksilver/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "quicksilver/error.hpp"
#include "quicksilver/qsf.hpp"

namespace quicksilver {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

double normal(std::mt19937_64& rng) {
  // Box-Muller on our own uniform draws, so streams match across libraries
  const double u1 = 1.0 - uniform(rng, 0.0, 1.0), u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Separable Gaussian blur with zero padding, sigma in voxels.
void blur(ScalarImage& img, double sigma) {
  const GridGeometry& g = img.geometry();
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * r + 1);
  for (int k = -r; k <= r; ++k) w[k + r] = std::exp(-0.5 * k * k / (sigma * sigma));
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= s;
  std::vector<double> tmp(img.size());
  for (int a = 0; a < g.dim; ++a) {
    const std::size_t stride = g.stride(a);
    const int n = g.sizes[a];
    for (std::size_t i = 0; i < img.size(); ++i) {
      const int pos = static_cast<int>((i / stride) % n);
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int q = pos + k;
        if (q < 0 || q >= n) continue;
        acc += w[k + r] * img[i + static_cast<std::ptrdiff_t>(k) * static_cast<std::ptrdiff_t>(stride)];
      }
      tmp[i] = acc;
    }
    std::copy(tmp.begin(), tmp.end(), img.values().begin());
  }
}

struct Ellipsoid {
  std::array<double, 3> c{}, r{};
  bool contains(const std::array<int, 3>& idx, int d) const {
    double q = 0.0;
    for (int a = 0; a < d; ++a) q += std::pow((idx[a] - c[a]) / r[a], 2);
    return q <= 1.0;
  }
};

void finish(ScalarImage& img) {
  blur(img, 1.0);
  for (double& v : img.values()) v = v < 1e-3 ? 0.0 : std::min(v, 1.0);
}

}  // namespace

void SynthConfig::validate() const {
  if (n_pairs < 0) throw InvalidArgument("synthetic: n_pairs must be >= 0");
  if (!(momentum_scale > 0.0) || !(smoothness > 0.0) || variant_scale < 0.0)
    throw InvalidArgument("synthetic: scales must be positive");
  if (template_kind == TemplateKind::File && template_file.empty())
    throw InvalidArgument("synthetic: template file not set");
}

ScalarImage make_template(const SynthConfig& cfg) {
  const GridGeometry& g = cfg.geom;
  const int d = g.dim;
  if (cfg.template_kind == TemplateKind::File) {
    ScalarImage img = read_scalar(cfg.template_file);
    require_same_geometry(img.geometry(), g, "template file");
    const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
    const double a = *lo, span = *hi - *lo;
    for (double& v : img.values()) v = span > 0 ? (v - a) / span : 0.0;
    return img;
  }
  std::mt19937_64 rng(cfg.seed);
  Ellipsoid head;
  for (int a = 0; a < d; ++a) {
    head.c[a] = 0.5 * (g.sizes[a] - 1) + uniform(rng, -1.0, 1.0);
    head.r[a] = g.sizes[a] * uniform(rng, 0.19, 0.22);
  }
  ScalarImage img(g);
  std::vector<std::array<int, 3>> idx(g.voxel_count());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = g.unravel(i);
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (head.contains(idx[i], d)) img[i] = 0.5;

  if (cfg.template_kind == TemplateKind::Shapes) {
    const double levels[] = {0.15, 0.8, 1.0, 0.3};
    for (int k = 0; k < 4; ++k) {
      Ellipsoid e;
      for (int a = 0; a < d; ++a) {
        e.c[a] = head.c[a] + head.r[a] * uniform(rng, -0.45, 0.45);
        e.r[a] = g.sizes[a] * uniform(rng, 0.05, 0.10);
      }
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (e.contains(idx[i], d) && head.contains(idx[i], d)) img[i] = levels[k];
    }
  } else {
    for (int k = 0; k < 5; ++k) {
      std::array<double, 3> c{};
      for (int a = 0; a < d; ++a) c[a] = head.c[a] + head.r[a] * uniform(rng, -0.5, 0.5);
      const double s = g.sizes[0] * uniform(rng, 0.03, 0.07), amp = uniform(rng, -0.4, 0.5);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (!head.contains(idx[i], d)) continue;
        double q = 0.0;
        for (int a = 0; a < d; ++a) q += std::pow(idx[i][a] - c[a], 2);
        img[i] = std::clamp(img[i] + amp * std::exp(-0.5 * q / (s * s)), 0.05, 1.0);
      }
    }
  }
  finish(img);
  return img;
}

ScalarImage smooth_random_field(const GridGeometry& g, double smoothness, std::mt19937_64& rng) {
  const int d = g.dim;
  const int K = 4;
  ScalarImage f(g);
  std::vector<std::array<int, 3>> idx(g.voxel_count());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = g.unravel(i);
  std::array<int, 3> k{0, 0, 0};
  const int count = d == 2 ? (2 * K + 1) * (2 * K + 1) : (2 * K + 1) * (2 * K + 1) * (2 * K + 1);
  for (int m = 0; m < count; ++m) {
    int rest = m;
    double k2 = 0.0;
    for (int a = 0; a < d; ++a) {
      k[a] = rest % (2 * K + 1) - K;
      rest /= 2 * K + 1;
      k2 += k[a] * k[a];
    }
    const double amp = std::exp(-smoothness * k2);
    const double ca = amp * normal(rng), sa = amp * normal(rng);
    if (k2 == 0.0) continue;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double phase = 0.0;
      for (int a = 0; a < d; ++a) phase += 2.0 * std::numbers::pi * k[a] * idx[i][a] / g.sizes[a];
      f[i] += ca * std::cos(phase) + sa * std::sin(phase);
    }
  }
  double ss = 0.0;
  for (double v : f.values()) ss += v * v;
  const double rms = std::sqrt(ss / f.size());
  if (rms > 0)
    for (double& v : f.values()) v /= rms;
  return f;
}

VectorField draw_momentum(const ScalarImage& img, double scale, double smoothness, std::mt19937_64& rng) {
  const GridGeometry& g = img.geometry();
  const ScalarImage lambda = smooth_random_field(g, smoothness, rng);
  const VectorField grad = spatial_gradient(img);
  VectorField m(g);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    double n2 = 0.0;
    for (int a = 0; a < g.dim; ++a) n2 += grad.at(i, a) * grad.at(i, a);
    if (std::sqrt(n2) < 1e-6) continue;
    for (int a = 0; a < g.dim; ++a) m.at(i, a) = scale * lambda[i] * grad.at(i, a);
  }
  return m;
}

AcceptedMomentum sample_momentum(const ScalarImage& img, const SynthConfig& cfg, const FluidKernel& kernel,
                                 double scale, std::mt19937_64& rng) {
  AcceptedMomentum out;
  for (int halvings = 0; halvings <= 5; ++halvings, scale *= 0.5) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      VectorField m = draw_momentum(img, scale, cfg.smoothness, rng);
      try {
        GeodesicState st = shoot(m, kernel, cfg.shooting);
        if (min_interior_jacobian(st.phi_inv) > 0.0) {
          out.m = std::move(m);
          out.state = std::move(st);
          out.scale = scale;
          return out;
        }
      } catch (const ShootingDiverged&) {
      }
      ++out.rejections;
    }
  }
  throw Error("synthetic: no admissible momentum after 5 scale halvings");
}

SynthPair make_pair(const SynthConfig& cfg, const ScalarImage& tmpl, const FluidKernel& kernel, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::mt19937_64 rng(seq);
  SynthPair p;
  p.moving = tmpl;
  if (cfg.variant_scale > 0.0) {
    const auto v = sample_momentum(tmpl, cfg, kernel, cfg.momentum_scale * cfg.variant_scale, rng);
    p.moving = warp_image(tmpl, v.state.phi_inv);
  }
  auto truth = sample_momentum(p.moving, cfg, kernel, cfg.momentum_scale, rng);
  p.momentum = std::move(truth.m);
  p.phi_inv = std::move(truth.state.phi_inv);
  p.target = warp_image(p.moving, p.phi_inv);
  if (cfg.remap)
    for (double& t : p.target.values()) t = t * (2.0 - t);
  return p;
}

std::vector<SynthPair> generate_pairs(const SynthConfig& cfg, int first, int count) {
  cfg.validate();
  if (count < 0) count = cfg.n_pairs - first;
  const ScalarImage tmpl = make_template(cfg);
  const FluidKernel kernel(cfg.geom, cfg.kernel);
  std::vector<SynthPair> pairs;
  pairs.reserve(std::max(count, 0));
  for (int i = first; i < first + count; ++i) pairs.push_back(make_pair(cfg, tmpl, kernel, i));
  return pairs;
}

std::vector<ManifestEntry> write_dataset(const std::filesystem::path& dir, const std::vector<SynthPair>& pairs,
                                         int first_index) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError(FormatError::Kind::Io, "cannot write " + (dir / "manifest.txt").string());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "pair_%04zu", i + static_cast<std::size_t>(first_index));
    const std::filesystem::path sub = name;
    std::filesystem::create_directories(dir / sub);
    ManifestEntry e{sub / "moving.qsf", sub / "target.qsf", sub / "momentum.qsf", sub / "map.qsf"};
    write_field(pairs[i].moving, dir / e.moving);
    write_field(pairs[i].target, dir / e.target);
    write_field(pairs[i].momentum, dir / e.momentum, FieldKind::Momentum);
    write_field(pairs[i].phi_inv, dir / e.map);
    manifest << e.moving.generic_string() << ' ' << e.target.generic_string() << ' ' << e.momentum.generic_string()
             << ' ' << e.map.generic_string() << '\n';
    entries.push_back(e);
  }
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw FormatError(FormatError::Kind::Io, "cannot open " + (dir / "manifest.txt").string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, c, d, extra;
    if (!(ls >> a >> b >> c >> d) || (ls >> extra))
      throw FormatError(FormatError::Kind::BadHeader, "manifest line " + std::to_string(lineno) + " needs 4 paths");
    out.push_back({a, b, c, d});
  }
  return out;
}

double median_foreground_displacement(const DeformationMap& phi_inv, const ScalarImage& img, double threshold) {
  require_same_geometry(phi_inv.geometry(), img.geometry(), "median displacement");
  const GridGeometry& g = img.geometry();
  std::vector<double> mags;
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (img[i] <= threshold) continue;
    const auto idx = g.unravel(i);
    double s = 0.0;
    for (int a = 0; a < g.dim; ++a) s += std::pow(phi_inv.at(i, a) - idx[a] * g.spacing[a], 2);
    mags.push_back(std::sqrt(s));
  }
  if (mags.empty()) return 0.0;
  auto mid = mags.begin() + mags.size() / 2;
  std::nth_element(mags.begin(), mid, mags.end());
  return *mid;
}

}  // namespace quicksilver
