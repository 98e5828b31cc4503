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

#include <random>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "cft/error.hpp"
#include "test_util.hpp"

namespace {

using ::cft::MultiChannelImage;
using ::cft::PatchOrigin;
using ::cft::testing::random_image;
using ::testing::ElementsAre;
using ::testing::ElementsAreArray;

TEST(BuildGrid, SmallExactCover) {
  EXPECT_THAT(cft::axis_offsets(10, 4, 3), ElementsAre(0, 3, 6));
  const auto g = cft::build_grid(10, 10, 4, 3);
  EXPECT_EQ(g.size(), 9u);
  for (const auto c : cft::coverage(g)) EXPECT_GE(c, 1);
}

TEST(BuildGrid, EdgeAlignedCodexGeometry) {
  const auto rows = cft::axis_offsets(720, 256, 60);
  const auto cols = cft::axis_offsets(960, 256, 60);
  EXPECT_THAT(rows, ElementsAre(0, 60, 120, 180, 240, 300, 360, 420, 464));
  EXPECT_EQ(cols.size(), 13u);
  EXPECT_EQ(cols.back(), 704);
  EXPECT_EQ(cols[cols.size() - 2], 660);
  EXPECT_EQ(cft::build_grid(720, 960, 256, 60).size(), 117u);
}

TEST(BuildGrid, SinglePatchAndErrors) {
  const auto g = cft::build_grid(8, 8, 8, 3);
  EXPECT_THAT(g.origins, ElementsAre(PatchOrigin{0, 0}));
  EXPECT_THROW(cft::build_grid(8, 6, 7, 1), cft::InvalidInput);
  EXPECT_THROW(cft::build_grid(8, 8, 0, 1), cft::InvalidInput);
  EXPECT_THROW(cft::build_grid(8, 8, 2, 0), cft::InvalidInput);
  EXPECT_THROW(cft::build_grid(8, 8, 2, 3), cft::InvalidInput);
}

TEST(BuildGrid, InvariantsAndMonotoneInStride) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t h = std::uniform_int_distribution<std::int64_t>(1, 90)(rng);
    const std::int64_t w = std::uniform_int_distribution<std::int64_t>(1, 90)(rng);
    const std::int64_t p = std::uniform_int_distribution<std::int64_t>(1, std::min(h, w))(rng);
    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (std::int64_t s = 1; s <= p; ++s) {
      const auto g = cft::build_grid(h, w, p, s);
      EXPECT_TRUE(std::is_sorted(g.origins.begin(), g.origins.end()));
      EXPECT_EQ(std::adjacent_find(g.origins.begin(), g.origins.end()), g.origins.end());
      for (const auto& o : g.origins) {
        EXPECT_TRUE(o.row >= 0 && o.row <= h - p && o.col >= 0 && o.col <= w - p);
      }
      const auto cov = cft::coverage(g);
      EXPECT_TRUE(std::all_of(cov.begin(), cov.end(), [](std::int32_t c) { return c >= 1; }));
      EXPECT_LE(g.size(), previous);
      previous = g.size();
    }
  }
}

TEST(Extract, DisjointQuadrants) {
  std::vector<float> px(16);
  std::iota(px.begin(), px.end(), 0.0f);
  const MultiChannelImage img({1, 4, 4}, px, {"a"}, "x", cft::Group::kZero);
  const auto patches = cft::extract(img, cft::build_grid(4, 4, 2, 2));
  ASSERT_EQ(patches.size(), 4u);
  EXPECT_THAT(patches[0], ElementsAre(0, 1, 4, 5));
  EXPECT_THAT(patches[1], ElementsAre(2, 3, 6, 7));
  EXPECT_THAT(patches[2], ElementsAre(8, 9, 12, 13));
  EXPECT_THAT(patches[3], ElementsAre(10, 11, 14, 15));
}

TEST(Extract, OverlapSharesCentreAndWholeImage) {
  std::vector<float> px(9);
  std::iota(px.begin(), px.end(), 1.0f);
  const MultiChannelImage img({1, 3, 3}, px, {"a"}, "x", cft::Group::kZero);
  const auto patches = cft::extract(img, cft::build_grid(3, 3, 2, 1));
  ASSERT_EQ(patches.size(), 4u);
  for (const auto& p : patches) EXPECT_THAT(p, ::testing::Contains(5.0f));
  EXPECT_THAT(cft::extract(img, cft::build_grid(3, 3, 3, 1))[0], ElementsAreArray(px));
  EXPECT_THROW(cft::extract(img, cft::build_grid(4, 4, 2, 2)), cft::ShapeMismatch);
}

TEST(Stitch, AveragesOverlap) {
  const auto wide = cft::build_grid(2, 3, 2, 1);
  ASSERT_EQ(wide.size(), 2u);
  // Columns 0-1 and 1-2; the shared middle column gets 0.2 and 0.4.
  const std::vector<float> flat{0.1f, 0.2f, 0.1f, 0.2f, 0.4f, 0.9f, 0.4f, 0.9f};
  EXPECT_THAT(cft::stitch(flat, 1, wide), ElementsAre(0.1f, 0.3f, 0.9f, 0.1f, 0.3f, 0.9f));
  EXPECT_THROW(cft::stitch(std::span<const float>(flat.data(), 7), 1, wide), cft::ShapeMismatch);
}

TEST(Stitch, RoundTripIsExact) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t h = std::uniform_int_distribution<std::int64_t>(4, 70)(rng);
    const std::int64_t w = std::uniform_int_distribution<std::int64_t>(4, 70)(rng);
    const std::int64_t p = std::uniform_int_distribution<std::int64_t>(1, std::min(h, w))(rng);
    const std::int64_t s = std::uniform_int_distribution<std::int64_t>(1, p)(rng);
    const auto img = random_image(2, h, w, static_cast<std::uint64_t>(trial));
    const auto g = cft::build_grid(h, w, p, s);
    const auto patches = cft::extract(img, g);
    EXPECT_THAT(cft::stitch(patches, 2, g), ElementsAreArray(img.pixels()))
        << h << "x" << w << " p=" << p << " s=" << s;
  }
}

TEST(BuildGrid, Deterministic) {
  const auto a = cft::build_grid(123, 77, 19, 7);
  const auto b = cft::build_grid(123, 77, 19, 7);
  EXPECT_EQ(a.origins, b.origins);
}

}  // namespace
