#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace quicksilver::nn {

/// Dense row-major tensor, typically (batch, channels, spatial...).
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  /// Product of extents from `axis` on.
  std::size_t inner(int axis) const {
    std::size_t n = 1;
    for (int a = axis; a < rank(); ++a) n *= shape[a];
    return n;
  }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

std::string shape_string(const std::vector<int>& shape);

}  // namespace quicksilver::nn
