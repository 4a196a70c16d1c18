#include "quicksilver/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "quicksilver/error.hpp"

namespace quicksilver::nn {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("train: lr must be > 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidArgument("train: dropout_p must be in [0, 1)");
  if (epochs < 0 || batch_size < 1) throw InvalidArgument("train: epochs >= 0 and batch_size >= 1 required");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    throw InvalidArgument("train: invalid Adam moments");
  if (weight_decay < 0.0) throw InvalidArgument("train: weight_decay must be >= 0");
}

template <class T>
void adam_step(std::vector<NamedTensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size()) throw InvalidArgument("adam: gradient count does not match parameters");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape);
      state.v.emplace_back(p.value.shape);
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const double step = cfg.lr / c1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.data;
    const auto& g = grads[i].data;
    if (g.size() != w.size()) throw InvalidArgument("adam: gradient shape mismatch for " + params[i].name);
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]) + cfg.weight_decay * static_cast<double>(w[k]);
      m[k] = static_cast<T>(cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk);
      v[k] = static_cast<T>(cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk);
      w[k] -= static_cast<T>(step * m[k] / (std::sqrt(v[k] / c2) + cfg.eps));
    }
  }
}

template void adam_step<float>(std::vector<NamedTensor<float>>&, const std::vector<Tensor<float>>&,
                               AdamState<float>&, const TrainConfig&);
template void adam_step<double>(std::vector<NamedTensor<double>>&, const std::vector<Tensor<double>>&,
                                AdamState<double>&, const TrainConfig&);

std::size_t PatchDataset::scalar_block() const {
  std::size_t n = 1;
  for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(patch);
  return n;
}

std::size_t PatchDataset::size() const { return moving.size() / scalar_block(); }

void PatchDataset::append(const PatchDataset& other) {
  if (other.dim != dim || other.patch != patch) throw InvalidArgument("dataset: patch geometry mismatch");
  moving.insert(moving.end(), other.moving.begin(), other.moving.end());
  target.insert(target.end(), other.target.begin(), other.target.end());
  momentum.insert(momentum.end(), other.momentum.begin(), other.momentum.end());
}

TrainResult train(Network<float>& net, const PatchDataset& data, const TrainConfig& cfg,
                  const std::function<void(int, double)>& on_epoch) {
  cfg.validate();
  const std::size_t N = data.size();
  if (N == 0) throw InvalidArgument("train: empty dataset");
  const std::size_t blk = data.scalar_block();
  if (data.target.size() != N * blk || data.momentum.size() != N * blk * data.dim)
    throw InvalidArgument("train: dataset arrays have inconsistent lengths");
  if (net.config().dim != data.dim) throw InvalidArgument("train: network and dataset dimension differ");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(N);
  AdamState<float> adam;
  TrainResult res;
  const Mode mode = cfg.dropout_p > 0.0 ? Mode::McDropout : Mode::Deterministic;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // hand-rolled Fisher-Yates: std::shuffle differs between standard libraries
    for (std::size_t i = N - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
      const int B = static_cast<int>(std::min<std::size_t>(cfg.batch_size, N - start));
      std::vector<int> shape{B, 1};
      for (int a = 0; a < data.dim; ++a) shape.push_back(data.patch);
      Tensor<float> mv(shape), tg(shape);
      shape[1] = data.dim;
      Tensor<float> truth(shape);
      for (int b = 0; b < B; ++b) {
        const std::size_t src = order[start + b];
        std::copy_n(data.moving.data() + src * blk, blk, mv.data.data() + b * blk);
        std::copy_n(data.target.data() + src * blk, blk, tg.data.data() + b * blk);
        std::copy_n(data.momentum.data() + src * blk * data.dim, blk * data.dim,
                    truth.data.data() + b * blk * data.dim);
      }
      ForwardCache<float> cache;
      const Tensor<float> pred = net.forward(mv, tg, mode, cfg.dropout_p, &rng, &cache);
      Tensor<float> grad;
      const double loss = l1_loss(pred, truth, &grad);
      adam_step(net.params(), net.backward(cache, grad), adam, cfg);
      res.step_loss.push_back(loss);
      sum += loss;
      ++batches;
    }
    res.epoch_loss.push_back(sum / batches);
    if (on_epoch) on_epoch(epoch, res.epoch_loss.back());
  }
  return res;
}

}  // namespace quicksilver::nn
