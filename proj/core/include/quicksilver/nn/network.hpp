#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "quicksilver/nn/layers.hpp"

namespace quicksilver::nn {

/// Architecture of the momentum regression network: two encoders (moving,
/// target), each with two blocks of three 3^d convolutions + PReLU followed
/// by a stride-2 2^d "pooling" convolution + PReLU, features F then 2F; the
/// concatenated 4F features feed one decoder per spatial axis that mirrors
/// the encoder with transposed-convolution unpooling, features 4F then 2F,
/// and a final 3^d convolution to one channel without activation.
struct NetConfig {
  int dim = 2;
  int features = 64;
};

enum class LayerKind { Conv, Pool, Unpool, Final };

struct LayerDef {
  std::string name;  // e.g. "enc_moving.conv1"
  LayerKind kind = LayerKind::Conv;
  int in_ch = 0;
  int out_ch = 0;
  bool prelu = true;
  bool dropout = true;  // dropout site in mc-dropout mode
  int kernel() const { return kind == LayerKind::Pool || kind == LayerKind::Unpool ? 2 : 3; }
};

enum class Mode { Deterministic, McDropout };

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Activations kept by forward() for backward().
template <class T>
struct ForwardCache {
  struct Step {
    Tensor<T> input;
    Tensor<T> pre;   // conv output before the activation
    Tensor<T> mask;  // empty unless dropout was applied
    ConvSpec spec;
  };
  std::vector<std::vector<Step>> chains;  // encoders first, then decoders
};

template <class T>
class Network {
 public:
  explicit Network(NetConfig cfg = {});

  /// Weights uniform in +-sqrt(6 / fan_in), biases 0, PReLU slopes 0.25.
  static Network initialized(NetConfig cfg, std::uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  /// Parameters in the fixed architecture order (weight, bias, slope per layer).
  std::vector<NamedTensor<T>>& params() { return params_; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }

  /// Layers of one chain: 0 = moving encoder, 1 = target encoder, 2.. = decoders.
  const std::vector<LayerDef>& chain(int i) const { return chains_[i]; }
  int chain_count() const { return static_cast<int>(chains_.size()); }

  /// moving, target: (B, 1, p^d). Returns (B, d, p^d). In McDropout mode a
  /// fresh mask with probability `dropout_p` is drawn from `rng` at every
  /// dropout site.
  Tensor<T> forward(const Tensor<T>& moving, const Tensor<T>& target, Mode mode = Mode::Deterministic,
                    double dropout_p = 0.0, std::mt19937_64* rng = nullptr, ForwardCache<T>* cache = nullptr) const;

  /// Parameter gradients (same order as params()) for d loss / d output.
  std::vector<Tensor<T>> backward(const ForwardCache<T>& cache, const Tensor<T>& grad_out) const;

  std::size_t parameter_count() const;
  /// Number of (input channel, output channel) filter pairs over all convolutions.
  std::size_t filter_count() const;

  template <class U>
  Network<U> cast() const {
    Network<U> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i].value = params_[i].value.template cast<U>();
    return out;
  }

 private:
  NetConfig cfg_;
  std::vector<std::vector<LayerDef>> chains_;
  std::vector<NamedTensor<T>> params_;
  std::vector<std::vector<int>> param_index_;  // per chain, per layer: first param index

  Tensor<T> run_chain(int chain, const Tensor<T>& x, const std::vector<int>& skip_extents, Mode mode, double p,
                      std::mt19937_64* rng, std::vector<typename ForwardCache<T>::Step>* steps) const;
};

/// Layer list of the architecture (shared by Network and the weight file reader).
std::vector<std::vector<LayerDef>> architecture(const NetConfig& cfg);

}  // namespace quicksilver::nn
