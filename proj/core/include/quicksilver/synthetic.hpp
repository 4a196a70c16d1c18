#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "quicksilver/fluid_kernel.hpp"
#include "quicksilver/grid.hpp"
#include "quicksilver/shooting.hpp"

namespace quicksilver {

enum class TemplateKind { Shapes, Blobs, File };

struct SynthConfig {
  GridGeometry geom = GridGeometry::cube(2, 64);
  int n_pairs = 230;
  /// Amplitude of lambda in m = lambda grad(I).
  double momentum_scale = 0.08;
  /// Spectral falloff exp(-smoothness |k|^2) of the random lambda.
  double smoothness = 0.25;
  /// Momentum scale of the warp that turns the template into each moving image.
  double variant_scale = 0.5;
  TemplateKind template_kind = TemplateKind::Shapes;
  std::filesystem::path template_file;
  std::uint64_t seed = 7;
  /// Monotone intensity remap t -> t (2 - t) of the target images.
  bool remap = false;
  FluidKernel::Params kernel;
  ShootingConfig shooting;

  void validate() const;
};

/// Piecewise-smooth phantom in [0,1]: a compact head-like region with inner
/// structures, lightly blurred, on an exactly zero background.
ScalarImage make_template(const SynthConfig& cfg);

/// Smooth random field with unit RMS.
ScalarImage smooth_random_field(const GridGeometry& geom, double smoothness, std::mt19937_64& rng);

/// One draw m = scale * lambda * grad(img); zero wherever |grad img| < 1e-6.
VectorField draw_momentum(const ScalarImage& img, double scale, double smoothness, std::mt19937_64& rng);

struct AcceptedMomentum {
  VectorField m;
  GeodesicState state;
  double scale = 0.0;  // scale actually used
  int rejections = 0;
};

/// Draws until the shot map has min interior det J > 0. After 20 consecutive
/// rejections the scale is halved; after 5 halvings it throws Error.
AcceptedMomentum sample_momentum(const ScalarImage& img, const SynthConfig& cfg, const FluidKernel& kernel,
                                 double scale, std::mt19937_64& rng);

struct SynthPair {
  ScalarImage moving;
  ScalarImage target;  // moving o Phi^-1(1)
  VectorField momentum;
  DeformationMap phi_inv;
};

/// Pair `index` of the dataset; independent of every other pair.
SynthPair make_pair(const SynthConfig& cfg, const ScalarImage& tmpl, const FluidKernel& kernel, int index);

std::vector<SynthPair> generate_pairs(const SynthConfig& cfg, int first = 0, int count = -1);

/// One manifest line per pair: `moving.qsf target.qsf momentum.qsf map.qsf`,
/// paths relative to the manifest's directory.
struct ManifestEntry {
  std::filesystem::path moving, target, momentum, map;
};

/// Writes pair_XXXX/{moving,target,momentum,map}.qsf and `manifest.txt`;
/// XXXX counts from `first_index`.
std::vector<ManifestEntry> write_dataset(const std::filesystem::path& dir, const std::vector<SynthPair>& pairs,
                                         int first_index = 0);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

/// Median |Phi^-1(x) - x| over voxels where `img` exceeds `threshold`.
double median_foreground_displacement(const DeformationMap& phi_inv, const ScalarImage& img, double threshold = 0.01);

}  // namespace quicksilver
