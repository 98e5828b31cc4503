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

#include "cft/image_store.hpp"

#include <fstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "cft/error.hpp"
#include "cft/tiff.hpp"
#include "test_util.hpp"

namespace {

using ::cft::DatasetManifest;
using ::cft::Group;
using ::cft::ImageShape;
using ::cft::InvalidInput;
using ::cft::ManifestEntry;
using ::cft::MultiChannelImage;
using ::cft::ShapeMismatch;
using ::cft::testing::random_image;
using ::cft::testing::ScopedTempDir;
using ::testing::ElementsAre;
using ::testing::ElementsAreArray;

MultiChannelImage one_channel(std::vector<float> px, std::int64_t h, std::int64_t w) {
  return MultiChannelImage({1, h, w}, std::move(px), {"a"}, "x", Group::kZero);
}

TEST(MultiChannelImage, RejectsBadConstruction) {
  EXPECT_THROW(MultiChannelImage({0, 2, 2}, {}, {}, "x", Group::kZero), InvalidInput);
  EXPECT_THROW(MultiChannelImage({1, 2, 2}, {1, 2, 3}, {"a"}, "x", Group::kZero), ShapeMismatch);
  EXPECT_THROW(MultiChannelImage({2, 1, 1}, {1, 2}, {"a", "a"}, "x", Group::kZero), InvalidInput);
  EXPECT_THROW(MultiChannelImage({2, 1, 1}, {1, 2}, {"a"}, "x", Group::kZero), ShapeMismatch);
}

TEST(NormalizeChannels, MinMaxExample) {
  const auto out = cft::normalize_channels(one_channel({2, 4, 6}, 1, 3));
  EXPECT_THAT(cft::testing::values(out.image.pixels()), ElementsAre(0.0f, 0.5f, 1.0f));
  ASSERT_EQ(out.ranges.size(), 1u);
  EXPECT_EQ(out.ranges[0].min, 2.0);
  EXPECT_EQ(out.ranges[0].max, 6.0);
}

TEST(NormalizeChannels, UnitRangeUnchanged) {
  const std::vector<float> px{0.0f, 0.25f, 1.0f, 0.7f};
  const auto out = cft::normalize_channels(one_channel(px, 2, 2));
  EXPECT_THAT(cft::testing::values(out.image.pixels()), ElementsAreArray(px));
}

TEST(NormalizeChannels, ConstantChannelBecomesZero) {
  const auto out = cft::normalize_channels(one_channel({5, 5, 5}, 1, 3));
  EXPECT_THAT(cft::testing::values(out.image.pixels()), ElementsAre(0.0f, 0.0f, 0.0f));
}

TEST(NormalizeChannels, IdempotentAndOrderPreserving) {
  auto img = random_image(3, 9, 7, 11);
  std::vector<float> scaled(img.pixels().begin(), img.pixels().end());
  for (auto& v : scaled) v = 3.0f * v - 7.0f;
  img = img.with_pixels(scaled);
  const auto once = cft::normalize_channels(img).image;
  const auto twice = cft::normalize_channels(once).image;
  EXPECT_THAT(cft::testing::values(twice.pixels()), ElementsAreArray(once.pixels()));
  for (std::int64_t k = 0; k < 3; ++k) {
    const auto a = img.channel(k), b = once.channel(k);
    EXPECT_EQ(std::max_element(a.begin(), a.end()) - a.begin(),
              std::max_element(b.begin(), b.end()) - b.begin());
    EXPECT_EQ(std::min_element(a.begin(), a.end()) - a.begin(),
              std::min_element(b.begin(), b.end()) - b.begin());
    for (const float v : b) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Downscale, Examples) {
  const auto img = random_image(2, 6, 5, 3);
  EXPECT_THAT(cft::testing::values(cft::downscale(img, 1).pixels()), ElementsAreArray(img.pixels()));
  EXPECT_THAT(cft::testing::values(cft::downscale(one_channel({1, 2, 3, 4}, 2, 2), 2).pixels()), ElementsAre(1.0f));
  EXPECT_THROW(cft::downscale(img, 0), InvalidInput);
}

TEST(Downscale, CodexGeometry) {
  const MultiChannelImage img({1, 1440, 1920}, std::vector<float>(1440 * 1920, 0.5f), {"a"}, "x",
                              Group::kZero);
  const auto out = cft::downscale(img, 2);
  EXPECT_EQ(out.height(), 720);
  EXPECT_EQ(out.width(), 960);
}

TEST(Downscale, TopLeftAnchorAndComposition) {
  const auto img = random_image(2, 13, 11, 5);
  const auto out = cft::downscale(img, 3);
  ASSERT_EQ(out.shape(), (ImageShape{2, 4, 3}));
  for (std::int64_t k = 0; k < 2; ++k)
    for (std::int64_t i = 0; i < 4; ++i)
      for (std::int64_t j = 0; j < 3; ++j) EXPECT_EQ(out.at(k, i, j), img.at(k, 3 * i, 3 * j));
  for (int a = 1; a <= 3; ++a)
    for (int b = 1; b <= 3; ++b)
      EXPECT_EQ(cft::downscale(cft::downscale(img, a), b).shape(), cft::downscale(img, a * b).shape());
}

TEST(ChannelSelection, ExcludesHeChannelsByDefault) {
  const std::vector<std::string> names{"CD3", "HE-R", "CD8", "H&E_green", "H&E blue", "DAPI"};
  const auto kept = cft::resolve_channel_selection(names, {}, cft::default_excluded_channels());
  EXPECT_THAT(kept, ElementsAre("CD3", "CD8", "DAPI"));
  const std::vector<std::string> include{"DAPI", "CD3"};
  EXPECT_THAT(cft::resolve_channel_selection(names, include, cft::default_excluded_channels()),
              ElementsAre("DAPI", "CD3"));
  const std::vector<std::string> missing{"nope"};
  EXPECT_THROW(cft::resolve_channel_selection(names, missing, {}), InvalidInput);
}

TEST(RawTensor, RoundTripIsBitExact) {
  ScopedTempDir dir;
  auto img = random_image(3, 8, 5, 42, "sample", Group::kOne);
  std::vector<float> px(img.pixels().begin(), img.pixels().end());
  px[0] = std::numeric_limits<float>::denorm_min();
  px[1] = std::nextafter(1.0f, 0.0f);
  img = img.with_pixels(px);
  const auto sidecar = cft::write_tensor(dir.path() / "sample", img);
  for (const auto& path : {sidecar, dir.path() / "sample.f32"}) {
    const auto back = cft::ingest(path, Group::kOne);
    EXPECT_EQ(back.shape(), img.shape());
    EXPECT_EQ(back.channel_names(), img.channel_names());
    EXPECT_EQ(back.image_id(), "sample");
    EXPECT_EQ(std::memcmp(back.pixels().data(), img.pixels().data(), px.size() * sizeof(float)), 0);
  }
}

TEST(RawTensor, DeclaredShapeMismatch) {
  ScopedTempDir dir;
  const auto sidecar = cft::write_tensor(dir.path() / "t", random_image(3, 32, 32, 1));
  auto j = cft::read_sidecar(sidecar);
  j["shape"] = {4, 32, 32};
  std::ofstream(sidecar) << j.dump();
  EXPECT_THROW(cft::ingest(sidecar, Group::kZero), ShapeMismatch);
}

TEST(Ingest, ThreePageTiff) {
  ScopedTempDir dir;
  std::vector<cft::tiff::Page> pages;
  for (int k = 0; k < 3; ++k) {
    cft::tiff::Page p{64, 64, std::vector<float>(64 * 64, static_cast<float>(k)), "m" + std::to_string(k)};
    pages.push_back(p);
  }
  cft::tiff::write_pages(dir.path() / "core.tif", pages, cft::tiff::SampleType::kUint16);
  const auto img = cft::ingest(dir.path() / "core.tif", Group::kOne);
  EXPECT_EQ(img.shape(), (ImageShape{3, 64, 64}));
  EXPECT_THAT(img.channel_names(), ElementsAre("m0", "m1", "m2"));
  EXPECT_EQ(img.at(2, 10, 10), 2.0f);
  EXPECT_EQ(img.image_id(), "core");
  EXPECT_EQ(img.group(), Group::kOne);
}

TEST(Ingest, CodexShapedTiff) {
  ScopedTempDir dir;
  std::vector<cft::tiff::Page> pages(61, cft::tiff::Page{1920, 1440, std::vector<float>(1920 * 1440, 1.0f), {}});
  cft::tiff::write_pages(dir.path() / "codex.tif", pages, cft::tiff::SampleType::kUint8);
  const auto img = cft::ingest(dir.path() / "codex.tif", Group::kZero);
  EXPECT_EQ(img.shape(), (ImageShape{61, 1440, 1920}));
  EXPECT_EQ(img.channel_names()[60], "60");
}

TEST(Ingest, PageDimensionMismatchAndMissingFile) {
  ScopedTempDir dir;
  std::vector<cft::tiff::Page> pages{{4, 4, std::vector<float>(16, 0.0f), {}},
                                     {4, 3, std::vector<float>(12, 0.0f), {}}};
  cft::tiff::write_pages(dir.path() / "bad.tif", pages);
  EXPECT_THROW(cft::ingest(dir.path() / "bad.tif", Group::kZero), ShapeMismatch);
  EXPECT_THROW(cft::ingest(dir.path() / "absent.tif", Group::kZero), cft::IoError);
}

DatasetManifest two_group_manifest(const ScopedTempDir& dir) {
  DatasetManifest m;
  m.root = dir.path();
  for (int g = 0; g < 2; ++g) {
    for (int n = 0; n < 2; ++n) {
      const auto id = "g" + std::to_string(g) + "_" + std::to_string(n);
      const auto img = random_image(2, 4, 4, static_cast<std::uint64_t>(10 * g + n), id, cft::group_from_int(g));
      cft::write_tensor(dir.path() / id, img);
      ManifestEntry e;
      e.image_id = id;
      e.path = id + ".json";
      e.group = img.group();
      e.patient_id = "p" + id;
      e.validation = g == 0 && n == 0;
      e.normalization = {{0.0, 1.0}, {0.5, 2.0}};
      m.add(e, img.channel_names(), 4, 4);
    }
  }
  return m;
}

TEST(DatasetManifest, SaveLoadRoundTrip) {
  ScopedTempDir dir;
  const auto m = two_group_manifest(dir);
  m.save(dir.path() / "manifest.json");
  const auto back = DatasetManifest::load(dir.path() / "manifest.json");
  EXPECT_EQ(cft::to_json(back), cft::to_json(m));
  EXPECT_EQ(back.group_entries(Group::kOne).size(), 2u);
  ASSERT_NE(back.validation_entry(), nullptr);
  EXPECT_EQ(back.validation_entry()->image_id, "g0_0");
  const auto img = back.load_image(back.find("g1_1"));
  EXPECT_EQ(img.group(), Group::kOne);
}

TEST(DatasetManifest, Invariants) {
  ScopedTempDir dir;
  auto m = two_group_manifest(dir);
  EXPECT_NO_THROW(m.validate(true));

  auto one_group = m;
  std::erase_if(one_group.entries, [](const ManifestEntry& e) { return e.group == Group::kOne; });
  EXPECT_THROW(one_group.validate(true), InvalidInput);

  auto two_val = m;
  two_val.entries[1].validation = true;
  EXPECT_THROW(two_val.validate(true), InvalidInput);

  ManifestEntry dup = m.entries[0];
  EXPECT_THROW(m.add(dup, m.channel_names, 4, 4), InvalidInput);
  ManifestEntry other = dup;
  other.image_id = "fresh";
  EXPECT_THROW(m.add(other, {"x", "y"}, 4, 4), ShapeMismatch);
  EXPECT_THROW(m.add(other, m.channel_names, 4, 5), ShapeMismatch);
}

}  // namespace
