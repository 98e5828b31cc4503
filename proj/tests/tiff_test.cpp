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

#include "cft/tiff.hpp"

#include <cstring>
#include <fstream>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "cft/error.hpp"
#include "test_util.hpp"

namespace {

using ::cft::testing::ScopedTempDir;
using ::cft::tiff::Page;
using ::cft::tiff::SampleType;
using ::testing::ElementsAre;
using ::testing::ElementsAreArray;
using ::testing::Optional;

std::vector<Page> sample_pages() {
  std::vector<Page> pages;
  for (std::uint32_t k = 0; k < 2; ++k) {
    Page p{5, 3, {}, "chan" + std::to_string(k)};
    for (std::uint32_t i = 0; i < 15; ++i) p.samples.push_back(static_cast<float>(i * 10 + k));
    pages.push_back(p);
  }
  return pages;
}

TEST(Tiff, RoundTripAllSampleTypes) {
  ScopedTempDir dir;
  const auto pages = sample_pages();
  for (const auto type : {SampleType::kUint8, SampleType::kUint16, SampleType::kFloat32}) {
    const auto path = dir.path() / "p.tif";
    cft::tiff::write_pages(path, pages, type);
    const auto back = cft::tiff::read_pages(path);
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(back[k].width, 5u);
      EXPECT_EQ(back[k].height, 3u);
      EXPECT_THAT(back[k].name, Optional(pages[k].name.value()));
      EXPECT_THAT(back[k].samples, ElementsAreArray(pages[k].samples));
    }
  }
}

TEST(Tiff, IntegerTypesRoundAndClamp) {
  ScopedTempDir dir;
  const std::vector<Page> pages{{4, 1, {-3.0f, 1.4f, 1.6f, 300.0f}, {}}};
  cft::tiff::write_pages(dir.path() / "c.tif", pages, SampleType::kUint8);
  EXPECT_THAT(cft::tiff::read_pages(dir.path() / "c.tif")[0].samples, ElementsAre(0, 1, 2, 255));
}

void put16(std::string& s, std::uint16_t v) { s.append({static_cast<char>(v >> 8), static_cast<char>(v & 0xff)}); }
void put32(std::string& s, std::uint32_t v) {
  put16(s, static_cast<std::uint16_t>(v >> 16));
  put16(s, static_cast<std::uint16_t>(v & 0xffff));
}

// Big-endian, 16-bit, one page of 2x2 stored as a single strip.
std::string big_endian_tiff() {
  std::string s = "MM";
  put16(s, 42);
  put32(s, 8);
  const std::uint16_t tags = 8;
  put16(s, tags);
  const std::uint32_t data_offset = 8 + 2 + tags * 12 + 4;
  auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::uint32_t value) {
    put16(s, tag);
    put16(s, type);
    put32(s, count);
    if (type == 3 && count == 1) {
      put16(s, static_cast<std::uint16_t>(value));
      put16(s, 0);
    } else {
      put32(s, value);
    }
  };
  entry(256, 3, 1, 2);
  entry(257, 3, 1, 2);
  entry(258, 3, 1, 16);
  entry(259, 3, 1, 1);
  entry(262, 3, 1, 1);
  entry(273, 4, 1, data_offset);
  entry(278, 3, 1, 2);
  entry(279, 4, 1, 8);
  put32(s, 0);
  for (const std::uint16_t v : {1, 2, 515, 65535}) put16(s, v);
  return s;
}

TEST(Tiff, ReadsBigEndian) {
  ScopedTempDir dir;
  std::ofstream(dir.path() / "be.tif", std::ios::binary) << big_endian_tiff();
  const auto pages = cft::tiff::read_pages(dir.path() / "be.tif");
  ASSERT_EQ(pages.size(), 1u);
  EXPECT_THAT(pages[0].samples, ElementsAre(1, 2, 515, 65535));
  EXPECT_FALSE(pages[0].name.has_value());
}

TEST(Tiff, RejectsGarbageAndTruncation) {
  ScopedTempDir dir;
  std::ofstream(dir.path() / "junk.tif", std::ios::binary) << "not a tiff at all";
  EXPECT_THROW(cft::tiff::read_pages(dir.path() / "junk.tif"), cft::Error);
  auto truncated = big_endian_tiff();
  truncated.resize(truncated.size() - 3);
  std::ofstream(dir.path() / "short.tif", std::ios::binary) << truncated;
  EXPECT_THROW(cft::tiff::read_pages(dir.path() / "short.tif"), cft::Error);
  EXPECT_THROW(cft::tiff::read_pages(dir.path() / "missing.tif"), cft::IoError);
}

}  // namespace
