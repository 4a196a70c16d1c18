#include "quicksilver/nn/network.hpp"

#include <cmath>

#include "quicksilver/error.hpp"

namespace quicksilver::nn {

std::vector<std::vector<LayerDef>> architecture(const NetConfig& cfg) {
  if (cfg.dim != 2 && cfg.dim != 3) throw InvalidArgument("network: dim must be 2 or 3");
  if (cfg.features < 1) throw InvalidArgument("network: features must be >= 1");
  const int F = cfg.features;
  auto encoder = [&](const std::string& prefix) {
    return std::vector<LayerDef>{
        {prefix + ".conv1", LayerKind::Conv, 1, F},          {prefix + ".conv2", LayerKind::Conv, F, F},
        {prefix + ".conv3", LayerKind::Conv, F, F},          {prefix + ".pool1", LayerKind::Pool, F, F, true, false},
        {prefix + ".conv4", LayerKind::Conv, F, 2 * F},      {prefix + ".conv5", LayerKind::Conv, 2 * F, 2 * F},
        {prefix + ".conv6", LayerKind::Conv, 2 * F, 2 * F},  {prefix + ".pool2", LayerKind::Pool, 2 * F, 2 * F, true, false},
    };
  };
  std::vector<std::vector<LayerDef>> chains{encoder("enc_moving"), encoder("enc_target")};
  for (int d = 0; d < cfg.dim; ++d) {
    const std::string p = "dec" + std::to_string(d);
    chains.push_back({
        {p + ".unpool1", LayerKind::Unpool, 4 * F, 4 * F, true, false},
        {p + ".conv1", LayerKind::Conv, 4 * F, 4 * F},
        {p + ".conv2", LayerKind::Conv, 4 * F, 4 * F},
        {p + ".conv3", LayerKind::Conv, 4 * F, 2 * F},
        {p + ".unpool2", LayerKind::Unpool, 2 * F, 2 * F, true, false},
        {p + ".conv4", LayerKind::Conv, 2 * F, 2 * F},
        {p + ".conv5", LayerKind::Conv, 2 * F, 2 * F},
        {p + ".final", LayerKind::Final, 2 * F, 1, false, false},
    });
  }
  return chains;
}

namespace {

ConvSpec layer_spec(const LayerDef& l, int dim, int extent, int target_extent) {
  ConvSpec s;
  s.dim = dim;
  s.in_ch = l.in_ch;
  s.out_ch = l.out_ch;
  s.kernel = l.kernel();
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::Final:
      s.pad = 1;
      break;
    case LayerKind::Pool:
      // odd extents pad by one so that e -> (e + 1) / 2
      s.stride = 2;
      s.pad = extent % 2;
      break;
    case LayerKind::Unpool:
      s.stride = 2;
      s.transposed = true;
      s.pad = target_extent % 2;
      s.output_pad = target_extent % 2;
      break;
  }
  return s;
}

int pooled(int e) { return (e + 2 * (e % 2) - 2) / 2 + 1; }

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  std::vector<int> shape = a.shape;
  shape[1] = a.shape[1] + b.shape[1];
  Tensor<T> out(shape);
  const std::size_t na = a.inner(1), nb = b.inner(1);
  for (int i = 0; i < a.shape[0]; ++i) {
    std::copy_n(a.data.data() + i * na, na, out.data.data() + i * (na + nb));
    std::copy_n(b.data.data() + i * nb, nb, out.data.data() + i * (na + nb) + na);
  }
  return out;
}

}  // namespace

template <class T>
Network<T>::Network(NetConfig cfg) : cfg_(cfg), chains_(architecture(cfg)) {
  for (const auto& chain : chains_) {
    param_index_.emplace_back();
    for (const auto& l : chain) {
      param_index_.back().push_back(static_cast<int>(params_.size()));
      ConvSpec s;
      s.dim = cfg.dim;
      s.in_ch = l.in_ch;
      s.out_ch = l.out_ch;
      s.kernel = l.kernel();
      s.transposed = l.kind == LayerKind::Unpool;
      params_.push_back({l.name + ".weight", Tensor<T>(s.weight_shape())});
      params_.push_back({l.name + ".bias", Tensor<T>({l.out_ch})});
      if (l.prelu) params_.push_back({l.name + ".slope", Tensor<T>({l.out_ch}, T(0.25))});
    }
  }
}

template <class T>
Network<T> Network<T>::initialized(NetConfig cfg, std::uint64_t seed) {
  Network net(cfg);
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < net.chains_.size(); ++c)
    for (std::size_t l = 0; l < net.chains_[c].size(); ++l) {
      const LayerDef& def = net.chains_[c][l];
      const double fan_in = def.in_ch * std::pow(def.kernel(), cfg.dim);
      const double bound = std::sqrt(6.0 / fan_in);
      auto& w = net.params_[net.param_index_[c][l]].value;
      for (auto& v : w.data) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
    }
  return net;
}

template <class T>
Tensor<T> Network<T>::run_chain(int chain, const Tensor<T>& x, const std::vector<int>& skip_extents, Mode mode,
                                double p, std::mt19937_64* rng,
                                std::vector<typename ForwardCache<T>::Step>* steps) const {
  Tensor<T> cur = x;
  int unpools = 0;
  for (std::size_t l = 0; l < chains_[chain].size(); ++l) {
    const LayerDef& def = chains_[chain][l];
    const int extent = cur.shape[2];
    const int target = def.kind == LayerKind::Unpool ? skip_extents[unpools++] : 0;
    const ConvSpec spec = layer_spec(def, cfg_.dim, extent, target);
    const int base = param_index_[chain][l];
    Tensor<T> pre = conv_forward(cur, params_[base].value, params_[base + 1].value, spec);
    Tensor<T> out = def.prelu ? prelu_forward(pre, params_[base + 2].value) : pre;
    Tensor<T> mask;
    if (mode == Mode::McDropout && def.dropout && p > 0.0) {
      if (!rng) throw InvalidArgument("network: mc-dropout forward needs a random generator");
      mask = dropout_mask<T>(out.shape, p, *rng);
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    }
    if (steps) steps->push_back({std::move(cur), std::move(pre), std::move(mask), spec});
    cur = std::move(out);
  }
  return cur;
}

template <class T>
Tensor<T> Network<T>::forward(const Tensor<T>& moving, const Tensor<T>& target, Mode mode, double dropout_p,
                              std::mt19937_64* rng, ForwardCache<T>* cache) const {
  const int d = cfg_.dim;
  if (moving.shape != target.shape || moving.rank() != d + 2 || moving.shape[1] != 1)
    throw InvalidArgument("network: inputs must both be (B, 1, p^d), got " + shape_string(moving.shape) + " and " +
                          shape_string(target.shape));
  const int e0 = moving.shape[2];
  for (int a = 0; a < d; ++a)
    if (moving.shape[2 + a] != e0) throw InvalidArgument("network: patches must be cubic");
  const int e1 = pooled(e0), e2 = pooled(e1);
  if (e2 < 1 || e0 < 4) throw InvalidArgument("network: patch too small");
  if (mode == Mode::McDropout && !(dropout_p >= 0.0 && dropout_p < 1.0))
    throw InvalidArgument("dropout probability must be in [0, 1)");

  if (cache) cache->chains.assign(chains_.size(), {});
  auto steps = [&](int c) { return cache ? &cache->chains[c] : nullptr; };
  const Tensor<T> fm = run_chain(0, moving, {}, mode, dropout_p, rng, steps(0));
  const Tensor<T> ft = run_chain(1, target, {}, mode, dropout_p, rng, steps(1));
  const Tensor<T> features = concat_channels(fm, ft);

  std::vector<int> shape = moving.shape;
  shape[1] = d;
  Tensor<T> out(shape);
  const std::size_t n = out.inner(2);
  for (int k = 0; k < d; ++k) {
    const Tensor<T> y = run_chain(2 + k, features, {e1, e0}, mode, dropout_p, rng, steps(2 + k));
    for (int b = 0; b < shape[0]; ++b) std::copy_n(y.data.data() + b * n, n, out.data.data() + (b * d + k) * n);
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> Network<T>::backward(const ForwardCache<T>& cache, const Tensor<T>& grad_out) const {
  const int d = cfg_.dim;
  if (cache.chains.size() != chains_.size()) throw InvalidArgument("network: cache does not match network");
  std::vector<Tensor<T>> grads(params_.size());

  auto back_chain = [&](int c, Tensor<T> g, bool need_input_grad) {
    const auto& steps = cache.chains[c];
    for (int l = static_cast<int>(steps.size()) - 1; l >= 0; --l) {
      const auto& st = steps[l];
      const LayerDef& def = chains_[c][l];
      const int base = param_index_[c][l];
      if (!st.mask.data.empty())
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= st.mask[i];
      Tensor<T> gz;
      if (def.prelu)
        prelu_backward(st.pre, params_[base + 2].value, g, gz, grads[base + 2]);
      else
        gz = std::move(g);
      Tensor<T> gx;
      const bool want = l > 0 || need_input_grad;
      conv_backward(st.input, params_[base].value, st.spec, gz, want ? &gx : nullptr, grads[base], grads[base + 1]);
      g = std::move(gx);
    }
    return g;
  };

  const std::size_t n = grad_out.inner(2);
  const int B = grad_out.shape[0];
  Tensor<T> gfeat;
  for (int k = 0; k < d; ++k) {
    std::vector<int> shape = grad_out.shape;
    shape[1] = 1;
    Tensor<T> gy(shape);
    for (int b = 0; b < B; ++b) std::copy_n(grad_out.data.data() + (b * d + k) * n, n, gy.data.data() + b * n);
    Tensor<T> g = back_chain(2 + k, std::move(gy), true);
    if (gfeat.data.empty()) {
      gfeat = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) gfeat[i] += g[i];
    }
  }
  // split the concatenated feature gradient back into the two encoders
  std::vector<int> half = gfeat.shape;
  half[1] /= 2;
  Tensor<T> gm(half), gt(half);
  const std::size_t nh = gm.inner(1);
  for (int b = 0; b < B; ++b) {
    std::copy_n(gfeat.data.data() + b * 2 * nh, nh, gm.data.data() + b * nh);
    std::copy_n(gfeat.data.data() + b * 2 * nh + nh, nh, gt.data.data() + b * nh);
  }
  back_chain(0, std::move(gm), false);
  back_chain(1, std::move(gt), false);
  return grads;
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <class T>
std::size_t Network<T>::filter_count() const {
  std::size_t n = 0;
  for (const auto& chain : chains_)
    for (const auto& l : chain) n += static_cast<std::size_t>(l.in_ch) * l.out_ch;
  return n;
}

template class Network<float>;
template class Network<double>;

}  // namespace quicksilver::nn
