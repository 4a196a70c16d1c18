#include "quicksilver/patch.hpp"

#include <algorithm>

#include "quicksilver/error.hpp"

namespace quicksilver {

namespace {

// Visits every voxel of the patch at `loc`: f(grid_index, patch_index).
template <class F>
void for_patch(const GridGeometry& geom, const PatchLocation& loc, int p, F&& f) {
  const int d = geom.dim;
  std::array<int, 3> ext{1, 1, 1}, size{1, 1, 1}, start{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    ext[3 - d + a] = p;
    size[3 - d + a] = geom.sizes[a];
    start[3 - d + a] = loc[a];
  }
  std::size_t k = 0;
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j) {
      const std::size_t row =
          (static_cast<std::size_t>(start[0] + i) * size[1] + (start[1] + j)) * size[2] + start[2];
      for (int l = 0; l < ext[2]; ++l) f(row + l, k++);
    }
}

}  // namespace

void PatchSpec::validate(const GridGeometry& geom) const {
  if (stride < 1 || stride > patch_size) throw InvalidArgument("patch: need 1 <= stride <= patch size");
  if (!(prune_threshold >= 0.0)) throw InvalidArgument("patch: prune threshold must be >= 0");
  for (int a = 0; a < geom.dim; ++a)
    if (patch_size > geom.sizes[a])
      throw InvalidArgument("patch: patch size " + std::to_string(patch_size) + " exceeds grid " + geom.describe());
}

std::vector<int> axis_starts(int size, int patch, int stride) {
  if (patch > size) throw InvalidArgument("patch: patch size exceeds axis length");
  if (stride < 1 || patch < 1) throw InvalidArgument("patch: stride and size must be positive");
  std::vector<int> starts;
  for (int s = 0; s + patch <= size; s += stride) starts.push_back(s);
  if (starts.back() != size - patch) starts.push_back(size - patch);
  return starts;
}

std::vector<PatchLocation> grid_locations(const GridGeometry& geom, const PatchSpec& spec) {
  spec.validate(geom);
  std::array<std::vector<int>, 3> starts{std::vector<int>{0}, std::vector<int>{0}, std::vector<int>{0}};
  for (int a = 0; a < geom.dim; ++a) starts[a] = axis_starts(geom.sizes[a], spec.patch_size, spec.stride);
  std::vector<PatchLocation> out;
  for (int i : starts[0])
    for (int j : starts[1])
      for (int k : starts[2]) out.push_back({i, j, k});
  return out;
}

PatchBatch extract(const ScalarImage& moving, const ScalarImage& target, const VectorField* momentum,
                   const PatchSpec& spec) {
  const GridGeometry& g = moving.geometry();
  require_same_geometry(g, target.geometry(), "extract");
  if (momentum) require_same_geometry(g, momentum->geometry(), "extract");
  PatchBatch b;
  b.locations = grid_locations(g, spec);
  b.has_momentum = momentum != nullptr;
  b.data.dim = g.dim;
  b.data.patch = spec.patch_size;
  const std::size_t blk = b.data.scalar_block(), n = b.locations.size();
  const int d = g.dim;
  b.data.moving.resize(n * blk);
  b.data.target.resize(n * blk);
  if (momentum) b.data.momentum.resize(n * blk * d);
  for (std::size_t i = 0; i < n; ++i)
    for_patch(g, b.locations[i], spec.patch_size, [&](std::size_t gi, std::size_t pi) {
      b.data.moving[i * blk + pi] = static_cast<float>(moving[gi]);
      b.data.target[i * blk + pi] = static_cast<float>(target[gi]);
      if (momentum)
        for (int c = 0; c < d; ++c)
          b.data.momentum[(i * d + c) * blk + pi] = static_cast<float>(momentum->at(gi, c));
    });
  return b;
}

PatchBatch prune_background(const PatchBatch& batch, const PatchSpec& spec) {
  PatchBatch out;
  out.has_momentum = batch.has_momentum;
  out.data.dim = batch.data.dim;
  out.data.patch = batch.data.patch;
  const std::size_t blk = batch.data.scalar_block();
  const int d = batch.data.dim;
  const float tau = static_cast<float>(spec.prune_threshold);
  auto below = [&](const std::vector<float>& v, std::size_t i) {
    return std::all_of(v.begin() + i * blk, v.begin() + (i + 1) * blk, [&](float x) { return x < tau; });
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (below(batch.data.moving, i) && below(batch.data.target, i)) continue;
    out.locations.push_back(batch.locations[i]);
    auto copy = [&](const std::vector<float>& src, std::vector<float>& dst, std::size_t width) {
      dst.insert(dst.end(), src.begin() + i * width, src.begin() + (i + 1) * width);
    };
    copy(batch.data.moving, out.data.moving, blk);
    copy(batch.data.target, out.data.target, blk);
    if (batch.has_momentum) copy(batch.data.momentum, out.data.momentum, blk * d);
  }
  return out;
}

VectorField assemble(const std::vector<float>& patches, const std::vector<PatchLocation>& locations,
                     const GridGeometry& geom, int patch_size) {
  const int d = geom.dim;
  std::size_t blk = 1;
  for (int a = 0; a < d; ++a) blk *= static_cast<std::size_t>(patch_size);
  if (patches.size() != locations.size() * blk * d) throw InvalidArgument("assemble: patch data size mismatch");
  for (const auto& loc : locations)
    for (int a = 0; a < d; ++a)
      if (loc[a] < 0 || loc[a] + patch_size > geom.sizes[a]) throw InvalidArgument("assemble: location out of bounds");

  VectorField out(geom);
  std::vector<int> count(geom.voxel_count(), 0);
  for (std::size_t i = 0; i < locations.size(); ++i)
    for_patch(geom, locations[i], patch_size, [&](std::size_t gi, std::size_t pi) {
      ++count[gi];
      for (int c = 0; c < d; ++c) out.at(gi, c) += patches[(i * d + c) * blk + pi];
    });
  for (std::size_t v = 0; v < count.size(); ++v)
    if (count[v] > 1)
      for (int c = 0; c < d; ++c) out.at(v, c) /= count[v];
  return out;
}

ScalarImage coverage_count(const std::vector<PatchLocation>& locations, const GridGeometry& geom, int patch_size) {
  ScalarImage out(geom);
  for (const auto& loc : locations) for_patch(geom, loc, patch_size, [&](std::size_t gi, std::size_t) { out[gi] += 1; });
  return out;
}

}  // namespace quicksilver
