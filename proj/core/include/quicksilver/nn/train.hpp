#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "quicksilver/nn/network.hpp"

namespace quicksilver::nn {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // optional l2 penalty folded into the gradient
  int epochs = 10;
  int batch_size = 16;
  double dropout_p = 0.0;  // > 0 trains with dropout at every dropout site
  std::uint64_t seed = 0;

  void validate() const;
};

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  long long t = 0;
};

/// One bias-corrected Adam update of every parameter.
template <class T>
void adam_step(std::vector<NamedTensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const TrainConfig& cfg);

/// Stacked training patches: moving and target are (N, 1, p^d), momentum (N, d, p^d).
struct PatchDataset {
  int dim = 2;
  int patch = 15;
  std::vector<float> moving, target, momentum;

  std::size_t size() const;
  std::size_t scalar_block() const;
  void append(const PatchDataset& other);
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean L1 over the epoch's minibatches
  std::vector<double> step_loss;
};

/// Epoch-shuffled minibatch Adam on the L1 loss. Deterministic given cfg.seed.
/// `on_epoch` (optional) is called after each epoch with (epoch, mean loss).
TrainResult train(Network<float>& net, const PatchDataset& data, const TrainConfig& cfg,
                  const std::function<void(int, double)>& on_epoch = {});

}  // namespace quicksilver::nn
