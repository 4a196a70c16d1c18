#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "quicksilver/fluid_kernel.hpp"
#include "quicksilver/nn/network.hpp"
#include "quicksilver/patch.hpp"
#include "quicksilver/shooting.hpp"

namespace quicksilver {

struct PredictOptions {
  PatchSpec patch;
  int workers = 1;
  int batch_size = 32;  // patches per forward call; also the unit of dropout randomness
};

struct PredictionResult {
  VectorField momentum;
  std::vector<VectorField> samples;        // mc_predict only
  std::optional<ScalarImage> uncertainty;  // present iff samples are
  int n_patches_predicted = 0;
  int n_patches_pruned = 0;
  double wall_time = 0.0;  // seconds
};

/// Runs the network over every patch of `batch` and returns d channel-first
/// p^d blocks per patch. Chunks of opts.batch_size are spread over the
/// workers; in McDropout mode chunk c draws its masks from a generator seeded
/// with (seed, c), so results do not depend on the worker count.
std::vector<float> predict_patches(const nn::Network<float>& net, const PatchBatch& batch, const PredictOptions& opts,
                                   nn::Mode mode = nn::Mode::Deterministic, double dropout_p = 0.0,
                                   std::uint64_t seed = 0);

/// extract -> prune -> forward -> assemble. The raw momentum is returned;
/// smoothing happens through K when it is shot.
PredictionResult predict_full(const nn::Network<float>& net, const ScalarImage& moving, const ScalarImage& target,
                              const PredictOptions& opts);

/// Same pipeline with dropout active at every dropout site.
VectorField predict_sample(const nn::Network<float>& net, const ScalarImage& moving, const ScalarImage& target,
                           const PredictOptions& opts, double dropout_p, std::uint64_t seed);

/// target o Phi, with Phi shot from `m` (the target pulled into moving space).
ScalarImage warp_back(const ScalarImage& target, const VectorField& m, const FluidKernel& kernel,
                      const ShootingConfig& shooting);

/// m = m_LP + sum of `iterations` corrections, each predicted by `corr_net`
/// from (moving, target o Phi) with Phi shot from the running sum. Performs
/// exactly `iterations` shootings; the summed momentum itself is not shot.
PredictionResult predict_corrected(const nn::Network<float>& lp_net, const nn::Network<float>& corr_net,
                                   const ScalarImage& moving, const ScalarImage& target, const PredictOptions& opts,
                                   const FluidKernel& kernel, const ShootingConfig& shooting, int iterations = 1);

/// n_samples dropout predictions; momentum is their mean. Every sample is shot
/// and the uncertainty is sqrt(sum over axes of the sample variance of the
/// Phi^-1 coordinate) per voxel.
PredictionResult mc_predict(const nn::Network<float>& net, const ScalarImage& moving, const ScalarImage& target,
                            const PredictOptions& opts, const FluidKernel& kernel, const ShootingConfig& shooting,
                            int n_samples = 50, double dropout_p = 0.2, std::uint64_t seed = 0);

struct TrainingPair {
  ScalarImage moving;
  ScalarImage target;
  VectorField momentum;  // regression target (optimised or ground-truth m0)
};

/// Non-background patches of every pair with their momentum patches.
PatchBatch build_training_dataset(const std::vector<TrainingPair>& pairs, const PatchSpec& spec);

/// Patches of (moving, target o Phi_LP) with residual momentum m - m_LP.
/// Pairs whose shooting diverges are skipped and reported in `warnings`.
PatchBatch build_correction_dataset(const std::vector<TrainingPair>& pairs, const nn::Network<float>& lp_net,
                                    const PredictOptions& opts, const FluidKernel& kernel,
                                    const ShootingConfig& shooting, std::vector<std::string>* warnings = nullptr);

}  // namespace quicksilver
