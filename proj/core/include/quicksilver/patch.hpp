#pragma once

#include <array>
#include <vector>

#include "quicksilver/grid.hpp"
#include "quicksilver/nn/train.hpp"

namespace quicksilver {

struct PatchSpec {
  int patch_size = 15;
  int stride = 14;
  double prune_threshold = 0.01;

  /// 1 <= stride <= patch_size <= every grid size, threshold >= 0.
  void validate(const GridGeometry& geom) const;
};

using PatchLocation = std::array<int, 3>;  // start index per axis, unused axes 0

/// Starts along one axis: 0, s, 2s, ... plus a final start at size - p when
/// the lattice does not reach the end.
std::vector<int> axis_starts(int size, int patch, int stride);

/// Cartesian product of axis_starts over every axis, last axis fastest.
std::vector<PatchLocation> grid_locations(const GridGeometry& geom, const PatchSpec& spec);

/// Patches cut at shared locations. data.moving / data.target hold one p^d
/// block per location, data.momentum (when present) d channel-first blocks.
struct PatchBatch {
  std::vector<PatchLocation> locations;
  nn::PatchDataset data;
  bool has_momentum = false;

  std::size_t size() const { return locations.size(); }
};

PatchBatch extract(const ScalarImage& moving, const ScalarImage& target, const VectorField* momentum,
                   const PatchSpec& spec);

/// Drops every patch whose moving and target blocks both lie entirely below
/// the threshold. Order of the retained patches is preserved.
PatchBatch prune_background(const PatchBatch& batch, const PatchSpec& spec);

/// Average of overlapping patch values; voxels no patch touches are 0.
/// `patches` holds d channel-first p^d blocks per location.
VectorField assemble(const std::vector<float>& patches, const std::vector<PatchLocation>& locations,
                     const GridGeometry& geom, int patch_size);

/// Number of patches covering each voxel.
ScalarImage coverage_count(const std::vector<PatchLocation>& locations, const GridGeometry& geom, int patch_size);

}  // namespace quicksilver
