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

#include "cft/patch_grid.hpp"

#include <string>

#include "cft/error.hpp"

namespace cft {

std::vector<std::int64_t> axis_offsets(std::int64_t dim, std::int64_t patch_size,
                                       std::int64_t stride) {
  if (patch_size < 1) throw InvalidInput("patch size must be >= 1");
  if (stride < 1) throw InvalidInput("stride must be >= 1");
  // Wider strides would leave uncovered gaps between windows.
  if (stride > patch_size) {
    throw InvalidInput("stride " + std::to_string(stride) + " exceeds patch size " +
                       std::to_string(patch_size));
  }
  if (patch_size > dim) {
    throw InvalidInput("patch size " + std::to_string(patch_size) + " exceeds image dimension " +
                       std::to_string(dim));
  }
  std::vector<std::int64_t> out;
  for (std::int64_t off = 0; off <= dim - patch_size; off += stride) out.push_back(off);
  if (out.back() + patch_size < dim) out.push_back(dim - patch_size);
  return out;
}

PatchGrid build_grid(std::int64_t height, std::int64_t width, std::int64_t patch_size,
                     std::int64_t stride) {
  PatchGrid grid{height, width, patch_size, stride, {}};
  const auto rows = axis_offsets(height, patch_size, stride);
  const auto cols = axis_offsets(width, patch_size, stride);
  grid.origins.reserve(rows.size() * cols.size());
  for (const auto r : rows) {
    for (const auto c : cols) grid.origins.push_back({r, c});
  }
  return grid;
}

std::vector<std::int32_t> coverage(const PatchGrid& grid) {
  std::vector<std::int32_t> count(static_cast<std::size_t>(grid.height * grid.width), 0);
  for (const auto& o : grid.origins) {
    for (std::int64_t i = 0; i < grid.patch_size; ++i) {
      auto* row = count.data() + (o.row + i) * grid.width + o.col;
      for (std::int64_t j = 0; j < grid.patch_size; ++j) ++row[j];
    }
  }
  return count;
}

namespace {

void check_grid_matches(const MultiChannelImage& img, const PatchGrid& grid) {
  if (img.height() != grid.height || img.width() != grid.width) {
    throw ShapeMismatch("patch grid built for " + std::to_string(grid.height) + "x" +
                        std::to_string(grid.width) + " but image " + img.image_id() + " is " +
                        std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
}

}  // namespace

void extract_into(const MultiChannelImage& img, const PatchGrid& grid, std::size_t n,
                  std::span<float> dst) {
  check_grid_matches(img, grid);
  const auto p = grid.patch_size;
  if (static_cast<std::int64_t>(dst.size()) != img.channels() * p * p) {
    throw ShapeMismatch("patch buffer has the wrong size");
  }
  const auto& o = grid.origins.at(n);
  const auto px = img.pixels();
  std::size_t out = 0;
  for (std::int64_t k = 0; k < img.channels(); ++k) {
    for (std::int64_t i = 0; i < p; ++i) {
      const auto* src = px.data() + (k * img.height() + o.row + i) * img.width() + o.col;
      for (std::int64_t j = 0; j < p; ++j) dst[out++] = src[j];
    }
  }
}

std::vector<Patch> extract(const MultiChannelImage& img, const PatchGrid& grid) {
  check_grid_matches(img, grid);
  const auto len = static_cast<std::size_t>(img.channels() * grid.patch_size * grid.patch_size);
  std::vector<Patch> out(grid.size(), Patch(len));
  for (std::size_t n = 0; n < grid.size(); ++n) extract_into(img, grid, n, out[n]);
  return out;
}

std::vector<float> stitch(std::span<const float> patches, std::int64_t channels,
                          const PatchGrid& grid) {
  const auto p = grid.patch_size;
  const auto len = channels * p * p;
  if (channels < 1) throw ShapeMismatch("stitch needs at least one channel");
  if (static_cast<std::int64_t>(patches.size()) != len * static_cast<std::int64_t>(grid.size())) {
    throw ShapeMismatch("stitch received " + std::to_string(patches.size()) + " values for " +
                        std::to_string(grid.size()) + " patches of " + std::to_string(len));
  }
  const auto plane = grid.height * grid.width;
  // Accumulate in grid order so the reduction is reproducible.
  std::vector<double> sum(static_cast<std::size_t>(channels * plane), 0.0);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const auto& o = grid.origins[n];
    const float* src = patches.data() + static_cast<std::int64_t>(n) * len;
    for (std::int64_t k = 0; k < channels; ++k) {
      for (std::int64_t i = 0; i < p; ++i) {
        double* row = sum.data() + k * plane + (o.row + i) * grid.width + o.col;
        const float* in = src + (k * p + i) * p;
        for (std::int64_t j = 0; j < p; ++j) row[j] += in[j];
      }
    }
  }
  const auto count = coverage(grid);
  std::vector<float> out(sum.size());
  for (std::int64_t k = 0; k < channels; ++k) {
    for (std::int64_t q = 0; q < plane; ++q) {
      const auto idx = static_cast<std::size_t>(k * plane + q);
      out[idx] = static_cast<float>(sum[idx] / count[static_cast<std::size_t>(q)]);
    }
  }
  return out;
}

std::vector<float> stitch(std::span<const Patch> patches, std::int64_t channels,
                          const PatchGrid& grid) {
  const auto len = static_cast<std::size_t>(channels * grid.patch_size * grid.patch_size);
  if (patches.size() != grid.size()) {
    throw ShapeMismatch("stitch received " + std::to_string(patches.size()) +
                        " patches for a grid of " + std::to_string(grid.size()));
  }
  std::vector<float> flat;
  flat.reserve(len * patches.size());
  for (const auto& patch : patches) {
    if (patch.size() != len) throw ShapeMismatch("patch has the wrong size for stitching");
    flat.insert(flat.end(), patch.begin(), patch.end());
  }
  return stitch(std::span<const float>(flat), channels, grid);
}

}  // namespace cft
