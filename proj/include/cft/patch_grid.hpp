// Copyright 2026 The cf-translate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CFT_PATCH_GRID_HPP
#define CFT_PATCH_GRID_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "cft/image_store.hpp"

namespace cft {

struct PatchOrigin {
  std::int64_t row = 0;
  std::int64_t col = 0;
  auto operator<=>(const PatchOrigin&) const = default;
};

/// Square windows of side `patch_size` placed every `stride` pixels, with an
/// extra edge-aligned window per axis when the regular offsets leave the far
/// border uncovered. Origins are unique and row-major sorted.
struct PatchGrid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t patch_size = 0;
  std::int64_t stride = 0;
  std::vector<PatchOrigin> origins;

  std::size_t size() const { return origins.size(); }
};

/// Offsets {0, s, 2s, ...} while offset <= dim - p, plus dim - p if needed.
std::vector<std::int64_t> axis_offsets(std::int64_t dim, std::int64_t patch_size,
                                       std::int64_t stride);

PatchGrid build_grid(std::int64_t height, std::int64_t width, std::int64_t patch_size,
                     std::int64_t stride);

/// Number of windows covering each pixel, row-major H*W.
std::vector<std::int32_t> coverage(const PatchGrid& grid);

/// One C*p*p buffer (channel-major) per grid origin, in grid order.
using Patch = std::vector<float>;

std::vector<Patch> extract(const MultiChannelImage& img, const PatchGrid& grid);

/// Writes patch n of `img` into `dst` (C*p*p floats).
void extract_into(const MultiChannelImage& img, const PatchGrid& grid, std::size_t n,
                  std::span<float> dst);

/// Overlap-averaged reassembly. `patches` is grid.size() contiguous C*p*p
/// blocks; returns C*H*W pixels where each pixel is the mean of every patch
/// value covering it.
std::vector<float> stitch(std::span<const float> patches, std::int64_t channels,
                          const PatchGrid& grid);
std::vector<float> stitch(std::span<const Patch> patches, std::int64_t channels,
                          const PatchGrid& grid);

}  // namespace cft

#endif  // CFT_PATCH_GRID_HPP
