#include "quicksilver/predict.hpp"

#include <chrono>
#include <cmath>

#include "quicksilver/detail/parallel.hpp"
#include "quicksilver/error.hpp"

namespace quicksilver {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Predicted {
  PatchBatch batch;
  std::vector<float> patches;
  int total = 0;
};

Predicted run(const nn::Network<float>& net, const ScalarImage& moving, const ScalarImage& target,
              const PredictOptions& opts, nn::Mode mode, double p, std::uint64_t seed) {
  if (net.config().dim != moving.geometry().dim) throw InvalidArgument("predict: network and image dimension differ");
  Predicted out;
  const PatchBatch all = extract(moving, target, nullptr, opts.patch);
  out.total = static_cast<int>(all.size());
  out.batch = prune_background(all, opts.patch);
  out.patches = predict_patches(net, out.batch, opts, mode, p, seed);
  return out;
}

}  // namespace

std::vector<float> predict_patches(const nn::Network<float>& net, const PatchBatch& batch, const PredictOptions& opts,
                                   nn::Mode mode, double dropout_p, std::uint64_t seed) {
  if (opts.batch_size < 1) throw InvalidArgument("predict: batch size must be >= 1");
  const int d = batch.data.dim;
  const std::size_t blk = batch.data.scalar_block();
  const int n = static_cast<int>(batch.size());
  std::vector<float> out(static_cast<std::size_t>(n) * d * blk);
  const int chunks = (n + opts.batch_size - 1) / opts.batch_size;
  detail::parallel_for(chunks, opts.workers, [&](int c) {
    const int start = c * opts.batch_size;
    const int B = std::min(opts.batch_size, n - start);
    std::vector<int> shape{B, 1};
    for (int a = 0; a < d; ++a) shape.push_back(batch.data.patch);
    nn::Tensor<float> mv(shape), tg(shape);
    std::copy_n(batch.data.moving.begin() + start * blk, B * blk, mv.data.begin());
    std::copy_n(batch.data.target.begin() + start * blk, B * blk, tg.data.begin());
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(seq);
    const nn::Tensor<float> y = net.forward(mv, tg, mode, dropout_p, &rng);
    std::copy(y.data.begin(), y.data.end(), out.begin() + start * d * blk);
  });
  return out;
}

PredictionResult predict_full(const nn::Network<float>& net, const ScalarImage& moving, const ScalarImage& target,
                              const PredictOptions& opts) {
  const auto t0 = Clock::now();
  const Predicted p = run(net, moving, target, opts, nn::Mode::Deterministic, 0.0, 0);
  PredictionResult r;
  r.momentum = assemble(p.patches, p.batch.locations, moving.geometry(), opts.patch.patch_size);
  r.n_patches_predicted = static_cast<int>(p.batch.size());
  r.n_patches_pruned = p.total - r.n_patches_predicted;
  r.wall_time = seconds_since(t0);
  return r;
}

VectorField predict_sample(const nn::Network<float>& net, const ScalarImage& moving, const ScalarImage& target,
                           const PredictOptions& opts, double dropout_p, std::uint64_t seed) {
  const Predicted p = run(net, moving, target, opts, nn::Mode::McDropout, dropout_p, seed);
  return assemble(p.patches, p.batch.locations, moving.geometry(), opts.patch.patch_size);
}

ScalarImage warp_back(const ScalarImage& target, const VectorField& m, const FluidKernel& kernel,
                      const ShootingConfig& shooting) {
  return warp_image(target, shoot(m, kernel, shooting).phi);
}

PredictionResult predict_corrected(const nn::Network<float>& lp_net, const nn::Network<float>& corr_net,
                                   const ScalarImage& moving, const ScalarImage& target, const PredictOptions& opts,
                                   const FluidKernel& kernel, const ShootingConfig& shooting, int iterations) {
  if (iterations < 0) throw InvalidArgument("predict: correction iterations must be >= 0");
  const auto t0 = Clock::now();
  PredictionResult r = predict_full(lp_net, moving, target, opts);
  for (int k = 0; k < iterations; ++k) {
    const ScalarImage back = warp_back(target, r.momentum, kernel, shooting);
    r.momentum += predict_full(corr_net, moving, back, opts).momentum;
  }
  r.wall_time = seconds_since(t0);
  return r;
}

PredictionResult mc_predict(const nn::Network<float>& net, const ScalarImage& moving, const ScalarImage& target,
                            const PredictOptions& opts, const FluidKernel& kernel, const ShootingConfig& shooting,
                            int n_samples, double dropout_p, std::uint64_t seed) {
  if (n_samples < 2) throw InvalidArgument("mc_predict needs at least 2 samples");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidArgument("dropout probability must be in [0, 1)");
  const auto t0 = Clock::now();
  const GridGeometry& g = moving.geometry();
  const int d = g.dim;
  PredictionResult r;
  r.momentum = VectorField(g);
  const std::size_t nv = g.voxel_count();
  std::vector<double> mean(nv * d, 0.0), m2(nv * d, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    const Predicted p = run(net, moving, target, opts, nn::Mode::McDropout, dropout_p, seed + 0x9e3779b97f4a7c15ULL * s);
    VectorField sample = assemble(p.patches, p.batch.locations, g, opts.patch.patch_size);
    if (s == 0) {
      r.n_patches_predicted = static_cast<int>(p.batch.size());
      r.n_patches_pruned = p.total - r.n_patches_predicted;
    }
    // Welford update on Phi^-1 coordinates
    const GeodesicState st = shoot(sample, kernel, shooting);
    for (std::size_t i = 0; i < nv * d; ++i) {
      const double x = st.phi_inv.coords()[i];
      const double delta = x - mean[i];
      mean[i] += delta / (s + 1);
      m2[i] += delta * (x - mean[i]);
    }
    // running mean: identical samples give back exactly that sample
    for (std::size_t i = 0; i < nv * d; ++i)
      r.momentum.values()[i] += (sample.values()[i] - r.momentum.values()[i]) / (s + 1);
    r.samples.push_back(std::move(sample));
  }
  ScalarImage unc(g);
  for (std::size_t v = 0; v < nv; ++v) {
    double var = 0.0;
    for (int a = 0; a < d; ++a) var += m2[v * d + a] / (n_samples - 1);
    unc[v] = std::sqrt(std::max(var, 0.0));
  }
  r.uncertainty = std::move(unc);
  r.wall_time = seconds_since(t0);
  return r;
}

PatchBatch build_training_dataset(const std::vector<TrainingPair>& pairs, const PatchSpec& spec) {
  PatchBatch out;
  out.has_momentum = true;
  out.data.patch = spec.patch_size;
  bool first = true;
  for (const auto& p : pairs) {
    const PatchBatch b = prune_background(extract(p.moving, p.target, &p.momentum, spec), spec);
    if (first) {
      out.data.dim = b.data.dim;
      out.data.patch = b.data.patch;
      first = false;
    }
    out.locations.insert(out.locations.end(), b.locations.begin(), b.locations.end());
    out.data.append(b.data);
  }
  return out;
}

PatchBatch build_correction_dataset(const std::vector<TrainingPair>& pairs, const nn::Network<float>& lp_net,
                                    const PredictOptions& opts, const FluidKernel& kernel,
                                    const ShootingConfig& shooting, std::vector<std::string>* warnings) {
  std::vector<TrainingPair> residual_pairs;
  residual_pairs.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const VectorField m_lp = predict_full(lp_net, p.moving, p.target, opts).momentum;
    try {
      ScalarImage back = warp_back(p.target, m_lp, kernel, shooting);
      residual_pairs.push_back({p.moving, std::move(back), p.momentum - m_lp});
    } catch (const ShootingDiverged& e) {
      if (warnings) warnings->push_back("pair " + std::to_string(i) + " skipped: " + e.what());
    }
  }
  PatchBatch out = build_training_dataset(residual_pairs, opts.patch);
  if (residual_pairs.empty()) out.data.dim = lp_net.config().dim;
  return out;
}

}  // namespace quicksilver
